"""Repeated-game transmission strategies for one node of a forwarding pair.

Every strategy outputs a :class:`StageDecision`, a distribution over the L**2
lexicographic actions whose first entry is the Drop action a_min. Strategies
are stateful objects owned by one pairwise game; they are told the outcome of
each stage through :meth:`Strategy.update`.

SARA plays the decision function f* from the region solver while its credit
is below the threshold mu and otherwise mirrors the peer's reputation. The
baselines keep one fixed action pair and only adapt how often they forward.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CreditParams:
    m0: float = 35.0
    beta: float = 10.0
    mu: float = 20.0
    nu: float = 1.0

    def __post_init__(self) -> None:
        if self.m0 < 0 or self.beta < 0 or self.mu < 0:
            raise ValueError("m0, beta and mu must be >= 0")
        if self.nu < 0:
            raise ValueError("nu must be >= 0")
        if self.mu < 2 * self.beta:
            warnings.warn(
                f"mu={self.mu} < 2*beta={2 * self.beta}: nodes are no longer guaranteed enough credits",
                stacklevel=2,
            )

    @property
    def safe(self) -> bool:
        return self.mu >= 2 * self.beta


@dataclass(frozen=True)
class StageDecision:
    """Probability vector over 0-based actions; ``probs[0]`` is a_min."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or (p < -1e-12).any() or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("a stage decision must be a probability vector")
        object.__setattr__(self, "probs", p)

    @classmethod
    def unit(cls, k: int, n_actions: int) -> StageDecision:
        """Point mass on the 1-based action ``k``."""
        if not 1 <= k <= n_actions:
            raise ValueError(f"action index {k} outside [1, {n_actions}]")
        p = np.zeros(n_actions)
        p[k - 1] = 1.0
        return cls(p)

    @classmethod
    def drop(cls, n_actions: int) -> StageDecision:
        return cls.unit(1, n_actions)

    @classmethod
    def forwarding(cls, k: int, x: float, n_actions: int) -> StageDecision:
        """Play action ``k`` (1-based) with probability x, a_min otherwise."""
        x = min(1.0, max(0.0, float(x)))
        p = np.zeros(n_actions)
        p[0] = 1.0 - x
        p[k - 1] += x
        return cls(p)

    @property
    def n_actions(self) -> int:
        return self.probs.size

    @property
    def forward_prob(self) -> float:
        return 1.0 - float(self.probs[0])

    def __getitem__(self, k: int) -> float:
        """Probability of the 1-based action ``k``."""
        return float(self.probs[k - 1])


@dataclass
class NodeLedger:
    credit: float
    reputation: float = 1.0  # of the peer
    count_f: int = 0
    count_d: int = 0


def update_reputation(tally: tuple[int, int], K: int, eps: float) -> float:
    """Misdetection-corrected Forward frequency of the peer."""
    count_f, count_d = tally
    if K < 1:
        raise ValueError("reputation is undefined without monitored packets (K = 0)")
    if count_f + count_d != K:
        raise ValueError("tally must account for all K packets")
    r = ((1.0 - eps) * count_f + eps * count_d) / K
    return min(1.0, max(0.0, r))


def update_credit(credit: float, pi_prev: StageDecision, k_star: int, params: CreditParams) -> float:
    """Reward beta for the mass put on the prescribed action, pay beta * nu.

    ``k_star`` is the 1-based index of f*(s(t-1)).
    """
    if not 1 <= k_star <= pi_prev.n_actions:
        raise ValueError(f"k_star {k_star} outside [1, {pi_prev.n_actions}]")
    return credit + params.beta * pi_prev[k_star] - params.beta * params.nu


def estimated_peer_distribution(r_peer: float, pi_star: StageDecision) -> StageDecision:
    """``R * pi_star + (1 - R) * pi_min``."""
    if not 0.0 <= r_peer <= 1.0:
        raise ValueError("reputation must lie in [0, 1]")
    p = r_peer * pi_star.probs
    p[0] += 1.0 - r_peer
    return StageDecision(p)


@dataclass(frozen=True)
class DecisionFunction:
    """Pure per-signal actions (0-based) together with the action count."""

    actions: np.ndarray
    n_actions: int

    def __getitem__(self, s: int) -> int:
        return int(self.actions[s])


def sara_decide(t: int, signal: int, ledger: NodeLedger, f_star: DecisionFunction, params: CreditParams) -> StageDecision:
    pi_star = StageDecision.unit(f_star[signal] + 1, f_star.n_actions)
    if t == 0 or ledger.credit < params.mu:
        return pi_star
    return estimated_peer_distribution(ledger.reputation, pi_star)


def gtft_decide(observed_rate: float | None, generosity: float = 0.1) -> float:
    """Forwarding probability of generous tit-for-tat; 1 before any observation."""
    if observed_rate is None:
        return 1.0
    return min(1.0, observed_rate + generosity)


@dataclass(frozen=True)
class IcarusParams:
    ifn: int = 5  # isolation length, frames
    edp_th: float = 0.85
    a: float = 0.5  # smoothing of the forwarding estimate
    b: float = 2.3  # price multiplier while flagged
    credit0: float = 220.0


def icarus_decide(isolating: bool) -> float:
    """Cooperative ICARUS-style node: drop everything while isolating the peer."""
    return 0.0 if isolating else 1.0


@dataclass
class StageOutcome:
    """What a node learns at the end of a stage."""

    signal: int
    decision: StageDecision
    seen_f: int  # peer's packets that looked forwarded
    K: int
    forwarded: int  # own relays of the peer's packets
    relayed_for_me: int  # peer's relays of this node's packets
    peer_isolating: bool = False


class Strategy:
    """Base class; subclasses set ``name``."""

    name = "base"
    selfish = False

    def decide(self, t: int, signal: int) -> StageDecision:
        raise NotImplementedError

    def update(self, t: int, outcome: StageOutcome) -> None:
        pass

    @property
    def isolating(self) -> bool:
        return False

    @property
    def credit(self) -> float | None:
        return None


class AlwaysDefect(Strategy):
    name = "always-defect"

    def __init__(self, n_actions: int):
        self.n_actions = n_actions

    def decide(self, t, signal):
        return StageDecision.drop(self.n_actions)


class FullCooperation(Strategy):
    """Always play f*(s)."""

    name = "full-cooperation"

    def __init__(self, f_star: DecisionFunction):
        self.f_star = f_star

    def decide(self, t, signal):
        return StageDecision.unit(self.f_star[signal] + 1, self.f_star.n_actions)


class Sara(Strategy):
    """SARA with a per-peer credit ledger.

    A selfish SARA node forwards at ``selfish_rate`` whenever its credit lets
    it, i.e. outside the cooperative branch; the credit law then drives it
    below mu, after which it is bound to f*.
    """

    name = "sara"

    def __init__(self, f_star: DecisionFunction, params: CreditParams, eps: float,
                 selfish: bool = False, selfish_rate: float = 0.1):
        self.f_star = f_star
        self.params = params
        self.eps = eps
        self.selfish = selfish
        self.selfish_rate = selfish_rate
        self.ledger = NodeLedger(credit=params.m0)
        self.credit_trace: list[float] = [params.m0]

    @property
    def credit(self) -> float:
        return self.ledger.credit

    def cooperative_branch(self, t: int) -> bool:
        if self.selfish:
            return self.ledger.credit < self.params.mu
        return t == 0 or self.ledger.credit < self.params.mu

    def decide(self, t, signal):
        if self.selfish and not self.cooperative_branch(t):
            return StageDecision.forwarding(self.f_star[signal] + 1, self.selfish_rate, self.f_star.n_actions)
        return sara_decide(t, signal, self.ledger, self.f_star, self.params)

    def update(self, t, outcome):
        self.ledger.count_f = outcome.seen_f
        self.ledger.count_d = outcome.K - outcome.seen_f
        self.ledger.reputation = update_reputation((outcome.seen_f, outcome.K - outcome.seen_f), outcome.K, self.eps)
        k_star = self.f_star[outcome.signal] + 1
        self.ledger.credit = update_credit(self.ledger.credit, outcome.decision, k_star, self.params)
        self.credit_trace.append(self.ledger.credit)


class Gtft(Strategy):
    """Generous tit-for-tat on a fixed action.

    Cooperative nodes start at rate 1. Selfish nodes start at
    ``selfish_rate`` and return to it whenever the peer forwards at least
    ``1 - generosity`` of the time, i.e. when they are not being punished.
    """

    name = "gtft"

    def __init__(self, action: int, n_actions: int, generosity: float = 0.1,
                 selfish: bool = False, selfish_rate: float = 0.1):
        self.action = action  # 1-based
        self.n_actions = n_actions
        self.g = generosity
        self.selfish = selfish
        self.selfish_rate = selfish_rate
        self.x = selfish_rate if selfish else 1.0

    def decide(self, t, signal):
        return StageDecision.forwarding(self.action, self.x, self.n_actions)

    def update(self, t, outcome):
        rate = outcome.seen_f / outcome.K
        if self.selfish and rate >= 1.0 - self.g:
            self.x = self.selfish_rate
        else:
            self.x = gtft_decide(rate, self.g)


class Icarus(Strategy):
    """Credit and reputation gate on a fixed action (behavioural approximation).

    The node smooths the peer's observed forwarding rate; when the estimate
    falls below ``edp_th`` it isolates the peer (drops everything) for ``ifn``
    frames. Relaying is paid in credits: each relayed packet moves its price
    from the sender to the relay, and the price is ``b`` instead of 1 while
    the sender is isolated by its peer. A selfish node forwards at
    ``selfish_rate`` unless it is isolated or out of credit, in which case it
    forwards fully.
    """

    name = "icarus"

    def __init__(self, action: int, n_actions: int, params: IcarusParams = IcarusParams(),
                 selfish: bool = False, selfish_rate: float = 0.1):
        self.action = action
        self.n_actions = n_actions
        self.p = params
        self.selfish = selfish
        self.selfish_rate = selfish_rate
        self.edp = 1.0
        self.isolate_left = 0
        self._credit = params.credit0
        self.punished = False

    @property
    def isolating(self) -> bool:
        return self.isolate_left > 0

    @property
    def credit(self) -> float:
        return self._credit

    def decide(self, t, signal):
        if self.selfish:
            if self.punished or self._credit < 0:
                x = 1.0
            else:
                x = 0.0 if self.isolating else self.selfish_rate
        else:
            x = icarus_decide(self.isolating)
        return StageDecision.forwarding(self.action, x, self.n_actions)

    def update(self, t, outcome):
        my_price = self.p.b if outcome.peer_isolating else 1.0
        peer_price = self.p.b if self.isolating else 1.0
        self._credit += peer_price * outcome.forwarded - my_price * outcome.relayed_for_me
        self.punished = outcome.peer_isolating
        self.isolate_left = max(0, self.isolate_left - 1)
        self.edp = self.p.a * self.edp + (1.0 - self.p.a) * outcome.seen_f / outcome.K
        if self.edp < self.p.edp_th:
            self.isolate_left = self.p.ifn


STRATEGIES = ("sara", "gtft", "icarus", "always-defect", "full-cooperation")


def stage_expectation(pi1: StageDecision, pi2: StageDecision, u1: np.ndarray, u2: np.ndarray) -> tuple[float, float]:
    """E[u_i] under independent mixing; ``u_i`` indexed [a1, a2] (0-based)."""
    i1 = np.flatnonzero(pi1.probs)
    i2 = np.flatnonzero(pi2.probs)
    w = np.outer(pi1.probs[i1], pi2.probs[i2])
    return float(np.sum(w * u1[np.ix_(i1, i2)])), float(np.sum(w * u2[np.ix_(i1, i2)]))
