"""Stage game of the generalized forwarder's dilemma.

Each node picks a pair of powers ``(p, p_coop)``: ``p`` carries its own
traffic, ``p_coop`` relays the neighbour's. Node ``i`` is rewarded through
the amplify-and-forward SNR ``p_i h_i p'_{-i} h'_{-i} / sigma^2`` and pays
``alpha * (p_i + p'_i)`` in energy.

Actions are numbered lexicographically over the power grid squared, starting
at 1: index 1 is ``(P_1, P_1)`` (the "Drop" action a_min), index 2 is
``(P_1, P_2)`` and index ``L**2`` is ``(P_L, P_L)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class PowerGrid:
    """Ordered transmit powers in watts; ``levels[0]`` is P_min."""

    levels: tuple[float, ...]

    def __post_init__(self) -> None:
        levels = tuple(float(x) for x in self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) < 2:
            raise ValueError("a power grid needs at least two levels")
        if levels[0] < 0:
            raise ValueError("powers must be non-negative")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("power levels must be strictly increasing")

    @classmethod
    def default(cls, n_levels: int = 10, min_positive: float = 0.01, p_max: float = 10.0) -> PowerGrid:
        """Zero plus ``n_levels - 1`` points spaced uniformly in dB up to ``p_max``."""
        if n_levels < 2:
            raise ValueError("n_levels must be >= 2")
        if n_levels == 2:
            return cls((0.0, p_max))
        return cls((0.0, *np.geomspace(min_positive, p_max, n_levels - 1).tolist()))

    @property
    def size(self) -> int:
        return len(self.levels)

    @property
    def n_actions(self) -> int:
        return len(self.levels) ** 2

    @property
    def p_min(self) -> float:
        return self.levels[0]

    @property
    def p_max(self) -> float:
        return self.levels[-1]

    def array(self) -> np.ndarray:
        return np.asarray(self.levels, dtype=float)

    def action_powers(self) -> tuple[np.ndarray, np.ndarray]:
        """(own, coop) power of every action, in 0-based lexicographic order."""
        lv = self.array()
        return np.repeat(lv, self.size), np.tile(lv, self.size)


@dataclass(frozen=True)
class ChannelGrid:
    """Ordered channel gains (dimensionless)."""

    levels: tuple[float, ...]

    def __post_init__(self) -> None:
        levels = tuple(float(x) for x in self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) < 1:
            raise ValueError("a channel grid needs at least one level")
        if levels[0] < 0:
            raise ValueError("channel gains must be non-negative")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("channel levels must be strictly increasing")

    @classmethod
    def default(cls, n_levels: int = 10, h_min: float = 0.04, h_max: float = 10.0) -> ChannelGrid:
        if n_levels == 1:
            return cls((h_min,))
        return cls(tuple(np.linspace(h_min, h_max, n_levels).tolist()))

    @property
    def size(self) -> int:
        return len(self.levels)

    def array(self) -> np.ndarray:
        return np.asarray(self.levels, dtype=float)

    def scaled(self, factor: float) -> ChannelGrid:
        return ChannelGrid(tuple(factor * x for x in self.levels))


@dataclass(frozen=True)
class Action:
    p: float
    p_coop: float
    index: int  # 1-based lexicographic position


def action_from_index(k: int, grid: PowerGrid) -> Action:
    L = grid.size
    if not 1 <= k <= L * L:
        raise ValueError(f"action index {k} outside [1, {L * L}]")
    i, j = divmod(k - 1, L)
    return Action(grid.levels[i], grid.levels[j], k)


def action_index(p: float, p_coop: float, grid: PowerGrid) -> int:
    try:
        i = grid.levels.index(float(p))
        j = grid.levels.index(float(p_coop))
    except ValueError:
        raise ValueError(f"({p}, {p_coop}) is not on the power grid") from None
    return i * grid.size + j + 1


def make_action(p: float, p_coop: float, grid: PowerGrid) -> Action:
    return Action(float(p), float(p_coop), action_index(p, p_coop, grid))


def a_min(grid: PowerGrid) -> Action:
    return action_from_index(1, grid)


@dataclass(frozen=True)
class NetworkState:
    """Channel gains (h1, h1', h2, h2') of one stage."""

    h1: float
    h1p: float
    h2: float
    h2p: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.h1, self.h1p, self.h2, self.h2p)


PHI_KINDS = ("exp", "power")


@dataclass(frozen=True)
class GameParams:
    alpha: float = 0.01
    sigma2: float = 0.1
    rate: float = 1.0  # spectral efficiency, bit/s/Hz
    phi_kind: str = "exp"
    symbols: int = 100  # packet length for the "power" efficiency

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be > 0")
        if self.rate <= 0:
            raise ValueError("rate must be > 0")
        if self.phi_kind not in PHI_KINDS:
            raise ValueError(f"phi_kind must be one of {PHI_KINDS}")
        if self.symbols < 1:
            raise ValueError("symbols must be >= 1")

    @property
    def c(self) -> float:
        return 2.0**self.rate - 1.0


def efficiency(x, params: GameParams):
    """Packet success rate; ``exp(-c/x)`` by default, 0 at x = 0.

    Accepts scalars or arrays and returns the same shape.
    """
    arr = np.asarray(x, dtype=float)
    if params.phi_kind == "exp":
        with np.errstate(divide="ignore", over="ignore"):
            out = np.where(arr > 0, np.exp(-params.c / np.where(arr > 0, arr, 1.0)), 0.0)
    else:
        out = (-np.expm1(-np.maximum(arr, 0.0))) ** params.symbols
    if np.ndim(x) == 0:
        return float(out)
    return out


def snr(state: NetworkState, a1: Action, a2: Action, node: int, params: GameParams) -> float:
    if node == 1:
        return a1.p * state.h1 * a2.p_coop * state.h2p / params.sigma2
    if node == 2:
        return a2.p * state.h2 * a1.p_coop * state.h1p / params.sigma2
    raise ValueError("node must be 1 or 2")


def utility(state: NetworkState, a1: Action, a2: Action, node: int, params: GameParams) -> float:
    own = a1 if node == 1 else a2
    return efficiency(snr(state, a1, a2, node, params), params) - params.alpha * (own.p + own.p_coop)


def utility_tensors(states: np.ndarray, grid: PowerGrid, params: GameParams) -> tuple[np.ndarray, np.ndarray]:
    """Dense utilities ``U[node][state, a1, a2]`` with 0-based action indices.

    ``states`` has shape (S, 4) holding (h1, h1', h2, h2'). Memory grows as
    S * L**4, so this is meant for small instances and brute-force checks.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    own, coop = grid.action_powers()
    h1, h1p, h2, h2p = (states[:, i][:, None, None] for i in range(4))
    p1, q1 = own[None, :, None], coop[None, :, None]
    p2, q2 = own[None, None, :], coop[None, None, :]
    u1 = efficiency(p1 * h1 * q2 * h2p / params.sigma2, params) - params.alpha * (p1 + q1)
    u2 = efficiency(p2 * h2 * q1 * h1p / params.sigma2, params) - params.alpha * (p2 + q2)
    return np.broadcast_to(u1, (len(states), grid.n_actions, grid.n_actions)).copy(), np.broadcast_to(
        u2, (len(states), grid.n_actions, grid.n_actions)
    ).copy()


def profitable_deviations(
    state: NetworkState, a1: Action, a2: Action, grid: PowerGrid, params: GameParams, tol: float = 1e-12
) -> list[tuple[int, Action, float]]:
    """Every unilateral deviation that strictly raises the deviator's utility."""
    found = []
    base = (utility(state, a1, a2, 1, params), utility(state, a1, a2, 2, params))
    for k in range(1, grid.n_actions + 1):
        dev = action_from_index(k, grid)
        g1 = utility(state, dev, a2, 1, params) - base[0]
        if g1 > tol:
            found.append((1, dev, g1))
        g2 = utility(state, a1, dev, 2, params) - base[1]
        if g2 > tol:
            found.append((2, dev, g2))
    return found


def static_nash(params: GameParams, grid: PowerGrid, state: NetworkState | None = None) -> tuple[Action, Action]:
    """Pure Nash equilibrium of the one-shot game.

    Relaying only costs energy, so ``p_coop = P_min`` is dominant for both
    nodes once ``alpha > 0``; each node then picks its own-traffic power
    against a silent relay, which is ``P_min`` whenever ``P_min = 0``.
    """
    if params.alpha <= 0:
        raise ValueError("the equilibrium is unique only for alpha > 0")
    lv = grid.array()
    if state is None:
        state = NetworkState(1.0, 1.0, 1.0, 1.0)
    q = grid.p_min
    gain1 = efficiency(lv * state.h1 * q * state.h2p / params.sigma2, params) - params.alpha * lv
    gain2 = efficiency(lv * state.h2 * q * state.h1p / params.sigma2, params) - params.alpha * lv
    p1 = lv[int(np.argmax(gain1))]
    p2 = lv[int(np.argmax(gain2))]
    return make_action(p1, q, grid), make_action(p2, q, grid)


def nash_deviation_gaps(states: np.ndarray, k1: int, k2: int, grid: PowerGrid, params: GameParams) -> np.ndarray:
    """Best unilateral gain per state and node for the profile (k1, k2), 1-based.

    Returns an (S, 2) array; the profile is a Nash equilibrium in every state
    when all entries are <= 0. Exhaustive over all L**2 deviations of each
    node, evaluated only against the fixed action of the other node.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    own, coop = grid.action_powers()
    h1, h1p, h2, h2p = (states[:, i][:, None] for i in range(4))
    i1, i2 = k1 - 1, k2 - 1
    s = params.sigma2
    u1 = efficiency(own[None, :] * h1 * coop[i2] * h2p / s, params) - params.alpha * (own + coop)[None, :]
    u2 = efficiency(own[None, :] * h2 * coop[i1] * h1p / s, params) - params.alpha * (own + coop)[None, :]
    g1 = u1.max(axis=1) - u1[:, i1]
    g2 = u2.max(axis=1) - u2[:, i2]
    return np.stack([g1, g2], axis=1)


def lex_order(grid: PowerGrid) -> Sequence[Action]:
    return [action_from_index(k, grid) for k in range(1, grid.n_actions + 1)]

