"""Long-term utility region: implementable correlations and their Pareto frontier.

A pair of decision policies ``P(a_i | s_i)`` induces the correlation

    Q(a0, a1, a2) = sum_{s1, s2} rho(a0) T(s1, s2 | a0) P1(a1 | s1) P2(a2 | s2)

and the frontier is traced by maximizing ``W = lam E_Q[u1] + (1 - lam) E_Q[u2]``
over the policy pair. ``W`` is bilinear in the two policies, so the
maximization is attacked by sequential best responses (:func:`algorithm1`),
each of which is solved exactly signal by signal. :func:`brute_force_oracle`
enumerates pure policy pairs on small instances for comparison.

Best responses use the product form of the SNR: a node's own-traffic power
only meets the peer's relay power, and its relay power only meets the peer's
own-traffic power. The per-signal maximization therefore splits into two
independent problems over L powers each.
"""

from __future__ import annotations

import csv
import io
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse

from .channel import StateDistribution
from .game import GameParams, PowerGrid, efficiency, utility_tensors
from .observation import SignalStructure


class OracleTooLarge(ValueError):
    """Raised when exhaustive enumeration is refused."""


@dataclass(frozen=True)
class DecisionPolicy:
    """Row-stochastic table ``P(a | s)`` over 0-based lexicographic actions."""

    node: int
    table: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.table, dtype=float)
        if t.ndim != 2:
            raise ValueError("policy table must be 2-D (signals x actions)")
        if (t < -1e-12).any() or np.abs(t.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValueError("policy rows must be probability vectors")
        object.__setattr__(self, "table", t)

    @classmethod
    def from_actions(cls, node: int, actions, n_actions: int) -> DecisionPolicy:
        actions = np.asarray(actions, dtype=int)
        t = np.zeros((actions.size, n_actions))
        t[np.arange(actions.size), actions] = 1.0
        return cls(node, t)

    @classmethod
    def constant(cls, node: int, n_signals: int, n_actions: int, action: int) -> DecisionPolicy:
        return cls.from_actions(node, np.full(n_signals, action), n_actions)

    @property
    def n_signals(self) -> int:
        return self.table.shape[0]

    @property
    def is_pure(self) -> bool:
        return bool(np.all(np.isclose(self.table.max(axis=1), 1.0)))

    def actions(self) -> np.ndarray:
        """0-based action of every signal (pure policies)."""
        return self.table.argmax(axis=1)

    def marginals(self, L: int) -> tuple[np.ndarray, np.ndarray]:
        """Distributions of the own-traffic and the relay power index per signal."""
        t = self.table.reshape(-1, L, L)
        return t.sum(axis=2), t.sum(axis=1)


@dataclass
class FrontierPoint:
    lam: float
    eu1: float
    eu2: float
    w: float
    policies: tuple[DecisionPolicy, DecisionPolicy]
    converged: bool = True
    iters: int = 0
    history: list[float] = field(default_factory=list)


class Scenario:
    """Everything the region solver needs: powers, channel law, signals, utility."""

    def __init__(self, power: PowerGrid, dist: StateDistribution, structure: SignalStructure, params: GameParams):
        if structure.n_states != dist.n_states:
            raise ValueError("signal structure and state distribution disagree on the number of states")
        self.power = power
        self.dist = dist
        self.structure = structure
        self.params = params

    @property
    def L(self) -> int:
        return self.power.size

    @property
    def n_actions(self) -> int:
        return self.power.n_actions

    def n_signals(self, node: int) -> int:
        return self.structure.n1 if node == 1 else self.structure.n2

    @property
    def factorized(self) -> bool:
        return self.structure.kind == "local"

    # -- event representation (any structure) ---------------------------------

    @cached_property
    def events(self):
        return self.structure.events(self.dist.rho)

    @cached_property
    def _event_phi(self) -> tuple[np.ndarray, np.ndarray]:
        # phi[e, own power of the beneficiary, relay power of its peer]
        ev = self.events
        h = self.dist.state_values()[ev.state]
        lv = self.power.array()
        grid = lv[:, None] * lv[None, :] / self.params.sigma2
        x1 = (h[:, 0] * h[:, 3])[:, None, None] * grid
        x2 = (h[:, 2] * h[:, 1])[:, None, None] * grid
        return efficiency(x1, self.params), efficiency(x2, self.params)

    @cached_property
    def _aggregators(self) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
        ev = self.events
        n = len(ev.weight)
        a1 = sparse.csr_matrix((ev.weight, (ev.s1, np.arange(n))), shape=(self.structure.n1, n))
        a2 = sparse.csr_matrix((ev.weight, (ev.s2, np.arange(n))), shape=(self.structure.n2, n))
        return a1, a2

    # -- product form (local CSI) ----------------------------------------------

    @cached_property
    def _phi_grid(self) -> np.ndarray:
        # Phi[p, j, q, k] = phi(P_p h_j P_q h_k / sigma2)
        lv = self.power.array()
        h = self.dist.grid.array()
        x = np.einsum("p,j,q,k->pjqk", lv, h, lv, h) / self.params.sigma2
        return efficiency(x, self.params)

    # -- shared -----------------------------------------------------------------

    def signal_probs(self, node: int) -> np.ndarray:
        if self.factorized:
            m = self.dist.masses
            a, b = (m[0], m[1]) if node == 1 else (m[2], m[3])
            return np.outer(a, b).reshape(-1)
        ev = self.events
        s = ev.s1 if node == 1 else ev.s2
        return np.bincount(s, weights=ev.weight, minlength=self.n_signals(node))

    def benefits(self, node: int, other: DecisionPolicy) -> tuple[np.ndarray, np.ndarray]:
        """Expected efficiency terms a node controls, per own signal.

        Returns ``(own, coop)`` of shape (n_signals, L), weighted by signal
        probability: ``own[s, p]`` is the mass-weighted E[phi(SNR_i)] when the
        node uses own power ``P_p`` at signal s, ``coop[s, p]`` the weighted
        E[phi(SNR_{-i})] when it relays with ``P_p``.
        """
        L = self.L
        o_own, o_coop = other.marginals(L)
        if self.factorized:
            H = self.dist.H
            m = self.dist.masses
            r_self = (m[0], m[1]) if node == 1 else (m[2], m[3])
            r_oth = (m[2], m[3]) if node == 1 else (m[0], m[1])
            wo = np.outer(r_oth[0], r_oth[1])  # (j, k) of the peer's signal
            d_coop = np.einsum("jk,jkq->kq", wo, o_coop.reshape(H, H, L))
            d_own = np.einsum("jk,jkq->jq", wo, o_own.reshape(H, H, L))
            phi = self._phi_grid
            s_own = np.einsum("pjqk,kq->jp", phi, d_coop)
            s_coop = np.einsum("qjpk,jq->kp", phi, d_own)
            rho_s = np.outer(r_self[0], r_self[1])
            own = (rho_s[:, :, None] * s_own[:, None, :]).reshape(H * H, L)
            coop = (rho_s[:, :, None] * s_coop[None, :, :]).reshape(H * H, L)
            return own, coop
        ev = self.events
        phi1, phi2 = self._event_phi
        agg = self._aggregators[node - 1]
        if node == 1:
            phi_self, phi_peer, s_oth = phi1, phi2, ev.s2
        else:
            phi_self, phi_peer, s_oth = phi2, phi1, ev.s1
        c_own = np.einsum("epq,eq->ep", phi_self, o_coop[s_oth])
        c_coop = np.einsum("eq,eqp->ep", o_own[s_oth], phi_peer)
        return np.asarray(agg @ c_own), np.asarray(agg @ c_coop)

    def expected_utilities(self, p1: DecisionPolicy, p2: DecisionPolicy) -> tuple[float, float]:
        L = self.L
        lv = self.power.array()
        alpha = self.params.alpha
        out = []
        for node, mine, other in ((1, p1, p2), (2, p2, p1)):
            own_b, _ = self.benefits(node, other)
            m_own, m_coop = mine.marginals(L)
            rho_s = self.signal_probs(node)
            cost = alpha * float(rho_s @ (m_own @ lv + m_coop @ lv))
            out.append(float(np.sum(m_own * own_b)) - cost)
        return out[0], out[1]

    def weighted(self, lam: float, p1: DecisionPolicy, p2: DecisionPolicy) -> float:
        eu1, eu2 = self.expected_utilities(p1, p2)
        return lam * eu1 + (1.0 - lam) * eu2

    def full_power_policies(self) -> tuple[DecisionPolicy, DecisionPolicy]:
        k = self.n_actions - 1
        return (
            DecisionPolicy.constant(1, self.n_signals(1), self.n_actions, k),
            DecisionPolicy.constant(2, self.n_signals(2), self.n_actions, k),
        )

    def random_policies(self, rng: np.random.Generator) -> tuple[DecisionPolicy, DecisionPolicy]:
        """Rows drawn uniformly from the simplex."""
        A = self.n_actions
        return (
            DecisionPolicy(1, rng.dirichlet(np.ones(A), size=self.n_signals(1))),
            DecisionPolicy(2, rng.dirichlet(np.ones(A), size=self.n_signals(2))),
        )


def _argmax_rows(scores: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    best = scores.max(axis=1)
    scale = np.abs(scores).max(axis=1)
    tol = 1e-12 * scale
    out = np.empty(len(scores), dtype=int)
    for s, row in enumerate(scores):
        cand = np.flatnonzero(row >= best[s] - tol[s])
        out[s] = cand[0] if cand.size == 1 else cand[rng.integers(cand.size)]
    return out


def _response_scores(lam: float, fixed: DecisionPolicy, scenario: Scenario) -> tuple[int, np.ndarray, np.ndarray]:
    # per-signal scores of the own-traffic and the relay power of the node opposite to ``fixed``
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    node = 2 if fixed.node == 1 else 1
    w_self, w_peer = (lam, 1.0 - lam) if node == 1 else (1.0 - lam, lam)
    own_b, coop_b = scenario.benefits(node, fixed)
    lv = scenario.power.array()
    rho_s = scenario.signal_probs(node)
    cost = scenario.params.alpha * w_self * rho_s[:, None] * lv[None, :]
    return node, w_self * own_b - cost, w_peer * coop_b - cost


def best_response(
    lam: float, fixed: DecisionPolicy, scenario: Scenario, rng: np.random.Generator
) -> DecisionPolicy:
    """Pure best response of the node opposite to ``fixed``.

    Each signal's row is a vertex of the simplex maximizing the conditional
    weighted objective; exact ties are broken uniformly with ``rng``.
    """
    node, own, coop = _response_scores(lam, fixed, scenario)
    p = _argmax_rows(own, rng)
    q = _argmax_rows(coop, rng)
    return DecisionPolicy.from_actions(node, p * scenario.L + q, scenario.n_actions)


def is_best_response(lam: float, policy: DecisionPolicy, fixed: DecisionPolicy, scenario: Scenario) -> bool:
    """Whether a pure ``policy`` attains the best-response value against ``fixed``."""
    _, own, coop = _response_scores(lam, fixed, scenario)
    a = policy.actions()
    rows = np.arange(len(a))
    ok = True
    for scores, idx in ((own, a // scenario.L), (coop, a % scenario.L)):
        tol = 1e-12 * np.abs(scores).max(axis=1)
        ok &= bool(np.all(scores[rows, idx] >= scores.max(axis=1) - tol))
    return ok


def algorithm1(
    scenario: Scenario,
    lam: float,
    init: tuple[DecisionPolicy, DecisionPolicy] | None = None,
    eta: float = 1e-9,
    max_iters: int = 200,
    rng: np.random.Generator | None = None,
) -> FrontierPoint:
    """Sequential best-response dynamics on the weighted objective.

    One iteration updates node 1 then node 2. Stops when an iteration changes
    W by less than ``eta`` and node 1 is still best-responding to node 2's
    latest policy; without the second condition a random tie-break of node 2
    (for instance a relay level that no traffic uses yet) could end the run
    before node 1 reacts to it. ``history`` records W after every single
    update, starting with the initial pair.
    """
    if eta < 0:
        raise ValueError("eta must be >= 0")
    rng = np.random.default_rng() if rng is None else rng
    p1, p2 = scenario.full_power_policies() if init is None else init
    w = scenario.weighted(lam, p1, p2)
    history = [w]
    converged = False
    n = 0
    for n in range(1, max_iters + 1):
        w_prev = w
        p1 = best_response(lam, p2, scenario, rng)
        history.append(scenario.weighted(lam, p1, p2))
        p2 = best_response(lam, p1, scenario, rng)
        w = scenario.weighted(lam, p1, p2)
        history.append(w)
        if abs(w - w_prev) < eta and is_best_response(lam, p1, p2, scenario):
            converged = True
            break
    eu1, eu2 = scenario.expected_utilities(p1, p2)
    return FrontierPoint(lam, eu1, eu2, lam * eu1 + (1.0 - lam) * eu2, (p1, p2), converged, n, history)


def build_joint(
    scenario: Scenario, p1: DecisionPolicy, p2: DecisionPolicy, max_entries: int = 5 * 10**7
) -> np.ndarray:
    """Dense ``Q[a0, a1, a2]`` (0-based actions)."""
    A = scenario.n_actions
    S = scenario.dist.n_states
    if p1.n_signals != scenario.n_signals(1) or p2.n_signals != scenario.n_signals(2):
        raise ValueError("policy dimensions do not match the signal structure")
    if p1.table.shape[1] != A or p2.table.shape[1] != A:
        raise ValueError("policy action count does not match the power grid")
    if S * A * A > max_entries:
        raise OracleTooLarge(f"joint distribution would need {S * A * A} entries")
    t = scenario.structure.dense_table()
    return np.einsum("z,zxy,xa,yb->zab", scenario.dist.rho, t, p1.table, p2.table)


def dense_utilities(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    return utility_tensors(scenario.dist.state_values(), scenario.power, scenario.params)


def weighted_utility(q: np.ndarray, lam: float, scenario: Scenario) -> float:
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    u1, u2 = dense_utilities(scenario)
    return float(lam * np.sum(q * u1) + (1.0 - lam) * np.sum(q * u2))


def brute_force_oracle(
    scenario: Scenario, lam: float, max_pairs: int = 10**6, max_entries: int = 5 * 10**7
) -> tuple[float, tuple[DecisionPolicy, DecisionPolicy]]:
    """Exact maximum of W over all pure decision-function pairs.

    A bilinear function over a product of simplices peaks at a vertex pair,
    so this is the global optimum. Works from dense utility tensors and the
    dense signal table, independently of the best-response machinery.
    """
    A = scenario.n_actions
    n1, n2 = scenario.n_signals(1), scenario.n_signals(2)
    S = scenario.dist.n_states
    n_pairs = A**n1 * A**n2
    if n_pairs > max_pairs:
        raise OracleTooLarge(f"{n_pairs} pure policy pairs exceed the limit of {max_pairs}")
    if S * A * A > max_entries or n1 * n2 * A * A > max_entries:
        raise OracleTooLarge("dense utility tensors too large for enumeration")
    u1, u2 = dense_utilities(scenario)
    wt = lam * u1 + (1.0 - lam) * u2
    t = scenario.structure.dense_table()
    # b[s1, a1, s2, a2]: weight of each (signal, action) combination
    b = np.einsum("z,zxy,zab->xayb", scenario.dist.rho, t, wt)
    f2 = np.array(list(itertools.product(range(A), repeat=n2)), dtype=int).reshape(-1, n2)
    best_val, best_pair = -np.inf, None
    for f1 in itertools.product(range(A), repeat=n1):
        m = b[np.arange(n1), list(f1)].sum(axis=0)  # (n2, A)
        vals = m[np.arange(n2), f2].sum(axis=1)
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best_val, best_pair = float(vals[j]), (np.array(f1), f2[j])
    pol = (
        DecisionPolicy.from_actions(1, best_pair[0], A),
        DecisionPolicy.from_actions(2, best_pair[1], A),
    )
    return best_val, pol


def best_fixed_pair(scenario: Scenario, lam: float = 0.5) -> tuple[int, int]:
    """Signal-blind action pair (0-based) maximizing W, solved exactly.

    This is the operating point of strategies that ignore the channel state.
    """
    lv = scenario.power.array()
    alpha = scenario.params.alpha
    m = scenario.dist.masses
    phi = scenario._phi_grid
    t1 = np.einsum("j,k,pjqk->pq", m[0], m[3], phi)  # E phi(SNR1)[p1, q2]
    t2 = np.einsum("j,k,pjqk->pq", m[2], m[1], phi)  # E phi(SNR2)[p2, q1]
    g1 = lam * t1 - alpha * (lam * lv[:, None] + (1.0 - lam) * lv[None, :])
    g2 = (1.0 - lam) * t2 - alpha * ((1.0 - lam) * lv[:, None] + lam * lv[None, :])
    p1, q2 = np.unravel_index(int(np.argmax(g1)), g1.shape)
    p2, q1 = np.unravel_index(int(np.argmax(g2)), g2.shape)
    L = scenario.L
    return int(p1 * L + q1), int(p2 * L + q2)


def _sweep_one(args) -> FrontierPoint:
    scenario, lam, eta, max_iters, seed = args
    return algorithm1(scenario, lam, eta=eta, max_iters=max_iters, rng=np.random.default_rng(seed))


def pareto_sweep(
    scenario: Scenario,
    lambdas=None,
    eta: float = 1e-9,
    seed: int = 0,
    max_iters: int = 200,
    workers: int = 1,
) -> list[FrontierPoint]:
    """One Algorithm-1 run per weight, each with its own random substream."""
    lambdas = np.linspace(0.0, 1.0, 101) if lambdas is None else np.asarray(lambdas, dtype=float)
    if ((lambdas < 0) | (lambdas > 1)).any():
        raise ValueError("lambda values must lie in [0, 1]")
    seeds = np.random.SeedSequence(seed).spawn(len(lambdas))
    jobs = [(scenario, float(lam), eta, max_iters, s) for lam, s in zip(lambdas, seeds)]
    if workers <= 1:
        return [_sweep_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_one, jobs))


FRONTIER_COLUMNS = ("lambda", "Eu1", "Eu2", "W", "converged", "iters")


def frontier_csv(points: list[FrontierPoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FRONTIER_COLUMNS)
    for pt in points:
        writer.writerow([repr(pt.lam), repr(pt.eu1), repr(pt.eu2), repr(pt.w), int(pt.converged), pt.iters])
    return buf.getvalue()
