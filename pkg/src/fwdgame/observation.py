"""State signals and Forward/Drop action monitoring.

A :class:`SignalStructure` describes what each node learns about the stage's
channel state. Built-in kinds map the state deterministically:

* ``global``: both nodes see the whole 4-tuple,
* ``local``: node i sees its own pair of gains (h_i, h_i'),
* ``none``: a single constant signal.

``custom`` structures carry an explicit table ``T[a0, s1, s2]``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .channel import StateDistribution

KINDS = ("global", "local", "none", "custom")


@dataclass(frozen=True)
class Events:
    """Support of the joint law of (a0, s1, s2), one row per atom."""

    state: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    weight: np.ndarray


@dataclass(frozen=True)
class SignalStructure:
    kind: str
    H: int
    n1: int
    n2: int
    table: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_states(self) -> int:
        return self.H**4

    @property
    def deterministic(self) -> bool:
        return self.table is None

    @cached_property
    def _maps(self) -> tuple[np.ndarray, np.ndarray]:
        # built lazily: a fine local grid has H**4 states but only H**2 signals
        H, n = self.H, self.n_states
        if self.kind == "global":
            ids = np.arange(n)
            return ids, ids.copy()
        if self.kind == "local":
            j1, k1, j2, k2 = np.unravel_index(np.arange(n), (H, H, H, H))
            return j1 * H + k1, j2 * H + k2
        z = np.zeros(n, dtype=int)
        return z, z.copy()

    @property
    def map1(self) -> np.ndarray:
        return self._maps[0]

    @property
    def map2(self) -> np.ndarray:
        return self._maps[1]

    def dense_table(self) -> np.ndarray:
        """``T[a0, s1, s2]``; materializes n_states * n1 * n2 entries."""
        if self.table is not None:
            return self.table
        t = np.zeros((self.n_states, self.n1, self.n2))
        t[np.arange(self.n_states), self.map1, self.map2] = 1.0
        return t

    def events(self, rho: np.ndarray) -> Events:
        rho = np.asarray(rho, dtype=float)
        if rho.shape != (self.n_states,):
            raise ValueError("state distribution does not match the signal structure")
        if self.table is None:
            keep = np.flatnonzero(rho > 0)
            return Events(keep, self.map1[keep], self.map2[keep], rho[keep])
        a0, s1, s2 = np.nonzero(self.table * (rho[:, None, None] > 0))
        return Events(a0, s1, s2, rho[a0] * self.table[a0, s1, s2])

    def marginal(self, node: int) -> np.ndarray:
        """``T_i[a0, s_i]``."""
        t = self.dense_table()
        return t.sum(axis=2) if node == 1 else t.sum(axis=1)


def make_signal_structure(kind: str, H: int, table: np.ndarray | None = None, atol: float = 1e-9) -> SignalStructure:
    if H < 1:
        raise ValueError("H must be >= 1")
    n_states = H**4
    if kind == "global":
        return SignalStructure(kind, H, n_states, n_states)
    if kind == "local":
        return SignalStructure(kind, H, H * H, H * H)
    if kind == "none":
        return SignalStructure(kind, H, 1, 1)
    if kind == "custom":
        if table is None:
            raise ValueError("custom structures need a table")
        table = np.asarray(table, dtype=float)
        if table.ndim != 3 or table.shape[0] != n_states:
            raise ValueError(f"custom table must have shape ({n_states}, n1, n2)")
        if (table < 0).any():
            raise ValueError("signal probabilities must be non-negative")
        sums = table.sum(axis=(1, 2))
        bad = np.flatnonzero(np.abs(sums - 1.0) > atol)
        if bad.size:
            raise ValueError(f"signal table rows do not sum to 1 (first bad state {bad[0]}: {sums[bad[0]]:.6g})")
        return SignalStructure(kind, H, table.shape[1], table.shape[2], table=table)
    raise ValueError(f"unknown signal kind {kind!r}; expected one of {KINDS}")


def sample_signals(structure: SignalStructure, state: int, rng: np.random.Generator) -> tuple[int, int]:
    if structure.table is None:
        return int(structure.map1[state]), int(structure.map2[state])
    row = structure.table[state].reshape(-1)
    flat = int(rng.choice(row.size, p=row / row.sum()))
    return divmod(flat, structure.n2)


def load_signal_table(path: str | Path, H: int) -> SignalStructure:
    """Read a custom structure from text.

    Format, one directive per line (``#`` starts a comment)::

        signals <n1> <n2>
        <state> <s1> <s2> <probability>
        ...

    Missing triples have probability 0; every state must be covered.
    """
    n1 = n2 = None
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "signals":
                n1, n2 = int(parts[1]), int(parts[2])
            elif len(parts) == 4:
                rows.append((int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])))
            else:
                raise ValueError("expected 'signals n1 n2' or 'state s1 s2 prob'")
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    if n1 is None:
        raise ValueError(f"{path}: missing 'signals' line")
    table = np.zeros((H**4, n1, n2))
    for a0, s1, s2, p in rows:
        table[a0, s1, s2] += p
    return make_signal_structure("custom", H, table)


class MonitorSignal(enum.Enum):
    F = "F"
    D = "D"


def is_drop(action_index: int, drop_rule: str = "min", L: int | None = None) -> bool:
    """Whether a (1-based) action counts as Drop.

    ``min``: only a_min = (P_min, P_min). ``coop``: any action whose relay
    power is P_min (needs ``L``).
    """
    if drop_rule == "min":
        return action_index == 1
    if drop_rule == "coop":
        if L is None:
            raise ValueError("the 'coop' drop rule needs the power-grid size")
        return (action_index - 1) % L == 0
    raise ValueError(f"unknown drop rule {drop_rule!r}")


def drop_mask(n_actions: int, drop_rule: str = "min") -> np.ndarray:
    L = int(round(n_actions**0.5))
    return np.array([is_drop(k, drop_rule, L) for k in range(1, n_actions + 1)])


def monitor_action(action_index: int, eps: float, rng: np.random.Generator, drop_rule: str = "min", L: int | None = None) -> MonitorSignal:
    if not 0.0 <= eps <= 0.5:
        raise ValueError("misdetection probability must lie in [0, 0.5]")
    forwarded = not is_drop(action_index, drop_rule, L)
    if rng.random() < eps:
        forwarded = not forwarded
    return MonitorSignal.F if forwarded else MonitorSignal.D


def monitor_counts(n_forwarded: int, K: int, eps: float, rng: np.random.Generator) -> tuple[int, int]:
    """Observed (F, D) tallies for K packets of which ``n_forwarded`` were relayed.

    Same law as K independent :func:`monitor_action` draws.
    """
    if not 0.0 <= eps <= 0.5:
        raise ValueError("misdetection probability must lie in [0, 0.5]")
    seen_f = rng.binomial(n_forwarded, 1.0 - eps) + rng.binomial(K - n_forwarded, eps)
    return int(seen_f), int(K - seen_f)


def events_for(structure: SignalStructure, dist: StateDistribution) -> Events:
    return structure.events(dist.rho)
