"""Cooperative packet forwarding as a repeated power-control game."""

from __future__ import annotations

__version__ = "0.1.0"
