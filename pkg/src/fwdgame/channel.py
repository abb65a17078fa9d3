"""Quantized Rayleigh fading and path loss.

Every gain is exponentially distributed (Rayleigh amplitude) and snapped to
the nearest level of a :class:`~fwdgame.game.ChannelGrid`; cells are
delimited by midpoints, the first one reaching down to 0 and the last one up
to infinity. The four gains of a pair are independent, so the state
distribution is a product of four per-gain masses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .game import ChannelGrid, NetworkState


@dataclass(frozen=True)
class PathLossParams:
    const: float = 1e3
    kappa: float = 5.0

    def __post_init__(self) -> None:
        if self.const <= 0 or self.kappa <= 0:
            raise ValueError("path-loss const and kappa must be > 0")


def path_loss_mean(d: float, plp: PathLossParams = PathLossParams()) -> float:
    if d < 0:
        raise ValueError("distance must be >= 0")
    return plp.const / (d * d + plp.kappa * plp.kappa)


def cell_edges(grid: ChannelGrid) -> np.ndarray:
    lv = grid.array()
    return np.concatenate([[0.0], 0.5 * (lv[1:] + lv[:-1]), [np.inf]])


def quantize_rayleigh(mean: float, grid: ChannelGrid) -> np.ndarray:
    """Probability of each grid level for an exponential gain of the given mean."""
    edges = cell_edges(grid)
    if mean <= 0:
        mass = np.zeros(grid.size)
        mass[0] = 1.0
        return mass
    # survival function differences are exact at both ends (exp(-inf) = 0)
    surv = np.exp(-edges / mean)
    mass = surv[:-1] - surv[1:]
    return mass / mass.sum()


def nearest_level(h, grid: ChannelGrid) -> np.ndarray:
    """Index of the quantization cell containing each gain."""
    inner = cell_edges(grid)[1:-1]
    return np.searchsorted(inner, np.asarray(h, dtype=float), side="right")


@dataclass(frozen=True)
class StateDistribution:
    """Product distribution over (h1, h1', h2, h2') on a common grid.

    State indices are row-major over the four per-gain level indices
    ``(j1, k1, j2, k2)``.
    """

    grid: ChannelGrid
    masses: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    means: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        masses = tuple(np.asarray(m, dtype=float) for m in self.masses)
        if len(masses) != 4:
            raise ValueError("need four per-gain masses")
        for m in masses:
            if m.shape != (self.grid.size,):
                raise ValueError("mass length must match the grid")
            if (m < 0).any() or abs(m.sum() - 1.0) > 1e-9:
                raise ValueError("per-gain masses must be a probability vector")
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_means(cls, means, grid: ChannelGrid) -> StateDistribution:
        means = tuple(float(m) for m in means)
        return cls(grid, tuple(quantize_rayleigh(m, grid) for m in means), means)

    @classmethod
    def point_mass(cls, grid: ChannelGrid, idx=(0, 0, 0, 0)) -> StateDistribution:
        masses = []
        for j in idx:
            m = np.zeros(grid.size)
            m[j] = 1.0
            masses.append(m)
        lv = grid.levels
        return cls(grid, tuple(masses), tuple(lv[j] for j in idx))

    @property
    def H(self) -> int:
        return self.grid.size

    @property
    def n_states(self) -> int:
        return self.grid.size**4

    @property
    def rho(self) -> np.ndarray:
        m1, m1p, m2, m2p = self.masses
        return np.einsum("a,b,c,d->abcd", m1, m1p, m2, m2p).reshape(-1)

    def gain_indices(self) -> np.ndarray:
        """(n_states, 4) per-gain level indices of every state."""
        H = self.grid.size
        return np.stack(np.unravel_index(np.arange(H**4), (H, H, H, H)), axis=1)

    def state_values(self) -> np.ndarray:
        return self.grid.array()[self.gain_indices()]

    def state_index(self, idx) -> int:
        H = self.grid.size
        j1, k1, j2, k2 = idx
        return ((j1 * H + k1) * H + j2) * H + k2

    def state(self, idx) -> NetworkState:
        lv = self.grid.levels
        return NetworkState(*(lv[j] for j in idx))


def sample_state_indices(dist: StateDistribution, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Per-gain level indices, shape (4,) or (size, 4)."""
    n = 1 if size is None else size
    cols = [rng.choice(dist.H, size=n, p=m) for m in dist.masses]
    out = np.stack(cols, axis=1)
    return out[0] if size is None else out


def sample_state(dist: StateDistribution, rng: np.random.Generator) -> NetworkState:
    return dist.state(sample_state_indices(dist, rng))


def sample_state_continuous(means, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Unquantized exponential gains (h1, h1', h2, h2'); shape (4,) or (size, 4)."""
    means = np.asarray(means, dtype=float)
    if size is None:
        return rng.exponential(means)
    return rng.exponential(means, size=(size, 4))
