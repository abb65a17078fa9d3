"""Discount threshold for SARA to be subgame perfect, and a simulation check.

For a decision-function pair (f1*, f2*) the relevant quantities are

* ``c_i``: expected one-stage gain of node i from dropping (playing a_min)
  while its peer plays its prescribed action,
* ``r_i``: expected one-stage loss of node i when the peer drops while node i
  plays its prescribed action.

SARA answers a drop with a proportional drop one stage later, so deviating
pays only if ``c_i > delta * (1 - 2 eps) * r_i``. The smallest discount
factor that deters every deviation is :func:`min_discount`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .game import efficiency
from .region import DecisionPolicy, Scenario
from .strategies import CreditParams


@dataclass(frozen=True)
class EquilibriumReport:
    c1: float
    r1: float
    c2: float
    r2: float
    delta_min: float
    eps: float

    @property
    def feasible(self) -> bool:
        return self.delta_min < 1.0

    def as_row(self) -> list:
        return [self.c1, self.r1, self.c2, self.r2, self.eps, self.delta_min, int(self.feasible)]


REPORT_COLUMNS = ("c1", "r1", "c2", "r2", "eps", "delta_min", "feasible")


def outcome_table(scenario: Scenario, f1: DecisionPolicy, f2: DecisionPolicy) -> np.ndarray:
    """``V[i, b1, b2]``: expected utility of node i+1 when node j plays its
    prescribed action (b_j = 1) or a_min (b_j = 0)."""
    if not (f1.is_pure and f2.is_pure):
        raise ValueError("utility gaps need pure decision functions")
    ev = scenario.events
    h = scenario.dist.state_values()[ev.state]
    L = scenario.L
    lv = scenario.power.array()
    prm = scenario.params
    k1 = f1.actions()[ev.s1]
    k2 = f2.actions()[ev.s2]
    # powers of each node under "prescribed" (index 1) and a_min (index 0)
    p1 = np.stack([np.full(len(k1), lv[0]), lv[k1 // L]])
    q1 = np.stack([np.full(len(k1), lv[0]), lv[k1 % L]])
    p2 = np.stack([np.full(len(k2), lv[0]), lv[k2 // L]])
    q2 = np.stack([np.full(len(k2), lv[0]), lv[k2 % L]])
    v = np.zeros((2, 2, 2))
    for b1 in (0, 1):
        for b2 in (0, 1):
            u1 = efficiency(p1[b1] * h[:, 0] * q2[b2] * h[:, 3] / prm.sigma2, prm) - prm.alpha * (p1[b1] + q1[b1])
            u2 = efficiency(p2[b2] * h[:, 2] * q1[b1] * h[:, 1] / prm.sigma2, prm) - prm.alpha * (p2[b2] + q2[b2])
            v[0, b1, b2] = ev.weight @ u1
            v[1, b1, b2] = ev.weight @ u2
    return v


def utility_gaps(scenario: Scenario, f1: DecisionPolicy, f2: DecisionPolicy) -> tuple[float, float, float, float]:
    """``(c1, r1, c2, r2)`` averaged over the joint law of state and signals."""
    v = outcome_table(scenario, f1, f2)
    c1 = v[0, 0, 1] - v[0, 1, 1]
    r1 = v[0, 1, 1] - v[0, 1, 0]
    c2 = v[1, 1, 0] - v[1, 1, 1]
    r2 = v[1, 1, 1] - v[1, 0, 1]
    return float(c1), float(r1), float(c2), float(r2)


def _ratio(c: float, r: float, eps: float) -> float:
    if c <= 0:
        return 0.0
    denom = (1.0 - 2.0 * eps) * r
    if denom <= 0:
        return math.inf
    return c / denom


def min_discount(c1: float, r1: float, c2: float, r2: float, eps: float) -> float:
    """Smallest discount factor deterring one-shot drops; ``inf`` if none does."""
    if not 0.0 <= eps <= 0.5:
        raise ValueError("eps must lie in [0, 0.5]")
    return max(_ratio(c1, r1, eps), _ratio(c2, r2, eps), 0.0)


def analyze(scenario: Scenario, f1: DecisionPolicy, f2: DecisionPolicy, eps: float) -> EquilibriumReport:
    c1, r1, c2, r2 = utility_gaps(scenario, f1, f2)
    return EquilibriumReport(c1, r1, c2, r2, min_discount(c1, r1, c2, r2, eps), eps)


def horizon_for(delta: float, tail: float = 1e-6) -> int:
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must lie in [0, 1)")
    if delta == 0.0:
        return 1
    return int(math.ceil(math.log(tail) / math.log(delta))) + 1


def _discounted_utility(v: np.ndarray, node: int, delta: float, horizon: int, K: int, eps: float,
                        credit: CreditParams, n_seeds: int, seed: int, tau: int | None, d: float) -> np.ndarray:
    """Per-seed discounted utility of ``node`` in the two-node SARA loop.

    Both nodes follow SARA; if ``tau`` is given, ``node`` moves mass ``d``
    from its prescribed action to a_min at that stage. Prescribed actions
    never coincide with a_min, so a node's stage decision is summarized by
    the probability x of playing its prescribed action. Binomial counts are
    drawn by inversion from a fixed uniform stream, so runs with the same
    seed are coupled monotonically.
    """
    rng = np.random.default_rng(seed)
    m = np.full((2, n_seeds), float(credit.m0))
    rep = np.ones((2, n_seeds))  # rep[j]: reputation node j holds of its peer
    total = np.zeros(n_seeds)
    weight = 1.0 - delta
    i = node - 1
    for t in range(horizon):
        coop = m < credit.mu if t > 0 else np.ones((2, n_seeds), dtype=bool)
        x = np.where(coop, 1.0, rep)
        if tau is not None and t == tau:
            x[i] = x[i] - np.minimum(d, x[i])
        x1, x2 = x
        u = (x1 * x2 * v[i, 1, 1] + x1 * (1 - x2) * v[i, 1, 0]
             + (1 - x1) * x2 * v[i, 0, 1] + (1 - x1) * (1 - x2) * v[i, 0, 0])
        total += weight * u
        weight *= delta
        draws = 1.0 - rng.random((3, 2, n_seeds))  # in (0, 1], where the inverse CDF is finite
        n_fwd = binom.ppf(draws[0], K, x)
        seen_f = binom.ppf(draws[1], n_fwd, 1.0 - eps) + binom.ppf(draws[2], K - n_fwd, eps)
        # node j rates its peer from the peer's packets
        rep = ((1.0 - eps) * seen_f[::-1] + eps * (K - seen_f[::-1])) / K
        m = m + credit.beta * x - credit.beta * credit.nu
    return total


def deviation_gain(scenario: Scenario, f1: DecisionPolicy, f2: DecisionPolicy, node: int, delta: float,
                   tau: int, d: float, eps: float = 0.0, K: int = 100, credit: CreditParams = CreditParams(),
                   n_seeds: int = 1000, seed: int = 0, horizon: int | None = None) -> float:
    """Mean change of the deviator's discounted utility (positive = profitable)."""
    if not 0.0 <= d <= 1.0:
        raise ValueError("deviation weight d must lie in [0, 1]")
    if node not in (1, 2):
        raise ValueError("node must be 1 or 2")
    horizon = horizon_for(delta) if horizon is None else horizon
    horizon = max(horizon, tau + 2)
    v = outcome_table(scenario, f1, f2)
    base = _discounted_utility(v, node, delta, horizon, K, eps, credit, n_seeds, seed, None, 0.0)
    dev = _discounted_utility(v, node, delta, horizon, K, eps, credit, n_seeds, seed, tau, d)
    return float(np.mean(dev - base))


def verify_one_shot_deviation(scenario: Scenario, f1: DecisionPolicy, f2: DecisionPolicy, delta: float,
                              tau: int, d: float, node: int | None = None, eps: float = 0.0, K: int = 100,
                              credit: CreditParams = CreditParams(), n_seeds: int = 1000, seed: int = 0,
                              horizon: int | None = None, tol: float = 1e-9) -> bool:
    """True when no node (or only the given node) gains from the deviation."""
    nodes = (1, 2) if node is None else (node,)
    return all(
        deviation_gain(scenario, f1, f2, i, delta, tau, d, eps, K, credit, n_seeds, seed, horizon) <= tol
        for i in nodes
    )
