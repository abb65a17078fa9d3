"""Monte-Carlo network simulation.

Nodes are dropped uniformly in a square; every pair within radio range plays
its own repeated forwarding game with private credits and reputations. One
frame is one stage: the pair's channel is redrawn, each node picks a stage
decision, K packets are exchanged in each direction and the peer's relaying
is monitored through a noisy Forward/Drop detector.

Randomness is split with ``numpy.random.SeedSequence``: one child per
topology draw, one grandchild per pair. Topology draws are independent jobs,
so results do not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import (
    PathLossParams,
    StateDistribution,
    nearest_level,
    path_loss_mean,
    sample_state_continuous,
    sample_state_indices,
)
from .game import ChannelGrid, GameParams, PowerGrid, efficiency
from .observation import make_signal_structure, monitor_counts
from .region import DecisionPolicy, Scenario, algorithm1, best_fixed_pair
from .strategies import (
    AlwaysDefect,
    CreditParams,
    DecisionFunction,
    FullCooperation,
    Gtft,
    Icarus,
    IcarusParams,
    Sara,
    StageOutcome,
    STRATEGIES,
)

CHANNEL_MODES = ("unit", "path-loss")
GRID_MODES = ("relative", "absolute")


@dataclass(frozen=True)
class SimConfig:
    n_nodes: int = 50
    area: float = 1000.0
    radio_range: float = 150.0
    frames: int = 20
    K: int = 100
    packet_rate: float = 2.0
    frame_seconds: float = 50.0
    selfish_fraction: float = 0.5
    selfish_rate: float = 0.1
    strategy: str = "sara"
    credit: CreditParams = CreditParams()
    game: GameParams = GameParams()
    power: PowerGrid = field(default_factory=PowerGrid.default)
    channel: ChannelGrid = field(default_factory=ChannelGrid.default)
    signal_kind: str = "local"
    lam: float = 0.5
    eps: float = 0.0
    channel_mode: str = "unit"
    grid_mode: str = "relative"
    path_loss: PathLossParams = PathLossParams()
    generosity: float = 0.1
    icarus: IcarusParams = IcarusParams()
    anp_a: float = 1.0
    anp_b: float = 1.0
    n_topologies: int = 50
    max_topology_attempts: int = 10_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_nodes < 2:
            raise ValueError("n_nodes must be >= 2")
        for name in ("area", "frames", "K", "packet_rate", "frame_seconds", "n_topologies"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.radio_range < 0:
            raise ValueError("radio_range must be >= 0")
        if not 0.0 <= self.selfish_fraction <= 1.0:
            raise ValueError("selfish_fraction must lie in [0, 1]")
        if not 0.0 <= self.selfish_rate <= 1.0:
            raise ValueError("selfish_rate must lie in [0, 1]")
        if not 0.0 <= self.eps <= 0.5:
            raise ValueError("eps must lie in [0, 0.5]")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.channel_mode not in CHANNEL_MODES:
            raise ValueError(f"channel_mode must be one of {CHANNEL_MODES}")
        if self.grid_mode not in GRID_MODES:
            raise ValueError(f"grid_mode must be one of {GRID_MODES}")
        if self.anp_a < 0 or self.anp_b < 0:
            raise ValueError("ANP coefficients must be >= 0")


@dataclass(frozen=True)
class Topology:
    positions: np.ndarray
    radio_range: float
    pairs: np.ndarray  # (n_pairs, 2), i < j
    distances: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    def degrees(self) -> np.ndarray:
        return np.bincount(self.pairs.reshape(-1), minlength=self.n_nodes)


class TopologyError(RuntimeError):
    pass


def generate_topology(config: SimConfig, rng: np.random.Generator) -> Topology:
    """Uniform placement, redrawn until every node has a neighbour."""
    n = config.n_nodes
    iu = np.triu_indices(n, k=1)
    for _ in range(config.max_topology_attempts):
        pos = rng.uniform(0.0, config.area, size=(n, 2))
        d = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1))
        adj = d <= config.radio_range
        np.fill_diagonal(adj, False)
        if adj.any(axis=1).all():
            mask = adj[iu]
            pairs = np.stack([iu[0][mask], iu[1][mask]], axis=1)
            return Topology(pos, config.radio_range, pairs, d[iu][mask])
    raise TopologyError(
        f"no topology with a neighbour for every node after {config.max_topology_attempts} draws "
        f"(N={n}, range={config.radio_range} m)"
    )


# -- per-pair models ------------------------------------------------------------


@dataclass(frozen=True)
class PairModel:
    """Channel law and operating points shared by both ends of a pair."""

    mean: float
    dist: StateDistribution
    f1: DecisionFunction
    f2: DecisionFunction
    fixed: tuple[int, int]  # 1-based signal-blind action pair

    @property
    def H(self) -> int:
        return self.dist.H


_MODEL_CACHE: dict[tuple, PairModel] = {}


def _mean_key(mean: float) -> float:
    # 0.02-decade bins; the model is built from the bin value, so it is a pure
    # function of the key and does not depend on which pair asked first
    return float(10.0 ** (round(math.log10(mean) * 50.0) / 50.0))


def pair_model(config: SimConfig, distance: float | None = None) -> PairModel:
    if config.channel_mode == "unit" or distance is None:
        mean = 1.0
    else:
        mean = _mean_key(path_loss_mean(distance, config.path_loss))
    key = (mean, config.power, config.channel, config.game, config.signal_kind, config.lam, config.grid_mode)
    model = _MODEL_CACHE.get(key)
    if model is None:
        model = build_pair_model(config, mean)
        _MODEL_CACHE[key] = model
    return model


def build_pair_model(config: SimConfig, mean: float) -> PairModel:
    grid = config.channel.scaled(mean) if config.grid_mode == "relative" and mean != 1.0 else config.channel
    dist = StateDistribution.from_means((mean,) * 4, grid)
    structure = make_signal_structure(config.signal_kind, grid.size)
    scenario = Scenario(config.power, dist, structure, config.game)
    seed = int(round(mean * 1e6)) % (2**32)
    pt = algorithm1(scenario, config.lam, rng=np.random.default_rng(seed))
    A = config.power.n_actions
    f1 = DecisionFunction(pt.policies[0].actions(), A)
    f2 = DecisionFunction(pt.policies[1].actions(), A)
    k1, k2 = best_fixed_pair(scenario, config.lam)
    return PairModel(mean, dist, f1, f2, (k1 + 1, k2 + 1))


def make_strategy(config: SimConfig, model: PairModel, node: int, selfish: bool):
    A = config.power.n_actions
    f_star = model.f1 if node == 1 else model.f2
    fixed = model.fixed[node - 1]
    name = config.strategy
    if name == "sara":
        return Sara(f_star, config.credit, config.eps, selfish, config.selfish_rate)
    if name == "gtft":
        return Gtft(fixed, A, config.generosity, selfish, config.selfish_rate)
    if name == "icarus":
        return Icarus(fixed, A, config.icarus, selfish, config.selfish_rate)
    if name == "always-defect":
        return AlwaysDefect(A)
    return FullCooperation(f_star)


# -- the pairwise repeated game --------------------------------------------------


@dataclass
class PairTrace:
    forwarded: np.ndarray  # (frames, 2): packets relayed by node 1, node 2
    forward_prob: np.ndarray  # (frames, 2)
    power: np.ndarray  # (frames, 2): expected p + p' per node
    utility: np.ndarray  # (frames, 2): expected stage utility
    credit: np.ndarray  # (frames + 1, 2); NaN for strategies without credit
    K: int

    @property
    def forwarding_rate(self) -> float:
        return float(self.forwarded.sum() / (self.forwarded.size * self.K))


def _stage_values(h, pi1, pi2, power: PowerGrid, params: GameParams):
    """Exact expected utilities and powers given the realized gains."""
    L = power.size
    lv = power.array()
    i1 = np.flatnonzero(pi1.probs)
    i2 = np.flatnonzero(pi2.probs)
    w1, w2 = pi1.probs[i1], pi2.probs[i2]
    p1, q1 = lv[i1 // L], lv[i1 % L]
    p2, q2 = lv[i2 // L], lv[i2 % L]
    s = params.sigma2
    e1 = efficiency(np.outer(p1 * h[0], q2 * h[3]) / s, params)
    e2 = efficiency(np.outer(q1 * h[1], p2 * h[2]) / s, params)
    pw1 = float(w1 @ (p1 + q1))
    pw2 = float(w2 @ (p2 + q2))
    u1 = float(w1 @ e1 @ w2) - params.alpha * pw1
    u2 = float(w1 @ e2 @ w2) - params.alpha * pw2
    return u1, u2, pw1, pw2


def run_pairwise_game(strategies, gains: np.ndarray, signals: np.ndarray, K: int, eps: float,
                      rng: np.random.Generator, power: PowerGrid, params: GameParams) -> PairTrace:
    """Play ``len(gains)`` stages between two strategy objects.

    ``gains`` holds the per-frame channel (h1, h1', h2, h2'), ``signals`` the
    per-frame (s1, s2) each node observes.
    """
    st1, st2 = strategies
    frames = len(gains)
    fwd = np.zeros((frames, 2), dtype=np.int64)
    xs = np.zeros((frames, 2))
    pw = np.zeros((frames, 2))
    ut = np.zeros((frames, 2))
    cr = np.full((frames + 1, 2), np.nan)
    cr[0] = [np.nan if st.credit is None else st.credit for st in (st1, st2)]
    for t in range(frames):
        s1, s2 = int(signals[t, 0]), int(signals[t, 1])
        pi1 = st1.decide(t, s1)
        pi2 = st2.decide(t, s2)
        x1, x2 = pi1.forward_prob, pi2.forward_prob
        n1 = int(rng.binomial(K, x1))
        n2 = int(rng.binomial(K, x2))
        seen1, _ = monitor_counts(n1, K, eps, rng)  # node 2 watching node 1
        seen2, _ = monitor_counts(n2, K, eps, rng)
        iso1, iso2 = st1.isolating, st2.isolating
        st1.update(t, StageOutcome(s1, pi1, seen2, K, n1, n2, iso2))
        st2.update(t, StageOutcome(s2, pi2, seen1, K, n2, n1, iso1))
        u1, u2, p1, p2 = _stage_values(gains[t], pi1, pi2, power, params)
        fwd[t] = n1, n2
        xs[t] = x1, x2
        pw[t] = p1, p2
        ut[t] = u1, u2
        cr[t + 1] = [np.nan if st.credit is None else st.credit for st in (st1, st2)]
    return PairTrace(fwd, xs, pw, ut, cr, K)


def draw_quantized(model: PairModel, frames: int, rng: np.random.Generator, signal_kind: str):
    idx = sample_state_indices(model.dist, rng, size=frames)
    gains = model.dist.grid.array()[idx]
    return gains, signals_from_levels(idx, model.H, signal_kind)


def signals_from_levels(idx: np.ndarray, H: int, signal_kind: str) -> np.ndarray:
    j1, k1, j2, k2 = idx.T
    if signal_kind == "local":
        return np.stack([j1 * H + k1, j2 * H + k2], axis=1)
    if signal_kind == "global":
        s = ((j1 * H + k1) * H + j2) * H + k2
        return np.stack([s, s], axis=1)
    if signal_kind == "none":
        return np.zeros((len(idx), 2), dtype=int)
    raise ValueError(f"signal kind {signal_kind!r} is not simulated")


# -- network runs -----------------------------------------------------------------


@dataclass
class TopologyResult:
    forwarded: int
    opportunities: int
    forwarded_per_frame: np.ndarray
    anp_w: float  # mean over frames of the network power
    utility_sum: float
    utility_count: int
    credit_min: float
    credit_max: float
    n_pairs: int


@dataclass
class Metrics:
    forwarding_rate: float
    anp_w: float
    anp_dbm: float
    mean_utility: float
    forwarding_per_frame: np.ndarray
    credit_min: float
    credit_max: float
    n_topologies: int
    mean_pairs: float


def anp(node_power: np.ndarray, a_coeff: float = 1.0, b_coeff: float = 1.0) -> tuple[float, float]:
    """Average network power from per-realization, per-node transmit power.

    ``node_power[r, i]`` is node i's expected p + p' (already weighted by its
    stage decision) in realization r, summed over the games it plays.
    """
    if a_coeff < 0 or b_coeff < 0:
        raise ValueError("ANP coefficients must be >= 0")
    node_power = np.atleast_2d(np.asarray(node_power, dtype=float))
    watts = float(np.mean(np.sum(a_coeff * node_power + b_coeff, axis=1)))
    return watts, to_dbm(watts)


def to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts * 1000.0) if watts > 0 else -math.inf


def child_seeds(seed: np.random.SeedSequence, n: int) -> list[np.random.SeedSequence]:
    """Like ``seed.spawn(n)`` but without advancing the parent's spawn counter."""
    return [np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + (k,)) for k in range(n)]


def simulate_topology(config: SimConfig, seed: np.random.SeedSequence) -> TopologyResult:
    topo_seed, role_seed, pair_seed = child_seeds(seed, 3)
    topo = generate_topology(config, np.random.default_rng(topo_seed))
    n = topo.n_nodes
    n_selfish = int(round(config.selfish_fraction * n))
    selfish = np.zeros(n, dtype=bool)
    selfish[np.random.default_rng(role_seed).permutation(n)[:n_selfish]] = True

    frames, K = config.frames, config.K
    node_power = np.zeros((frames, n))
    fwd_frame = np.zeros(frames, dtype=np.int64)
    util = 0.0
    cmin, cmax = math.inf, -math.inf
    for (i, j), d, ss in zip(topo.pairs, topo.distances, child_seeds(pair_seed, len(topo.pairs))):
        model = pair_model(config, float(d))
        rng = np.random.default_rng(ss)
        gains, signals = draw_quantized(model, frames, rng, config.signal_kind)
        strategies = (make_strategy(config, model, 1, bool(selfish[i])),
                      make_strategy(config, model, 2, bool(selfish[j])))
        tr = run_pairwise_game(strategies, gains, signals, K, config.eps, rng, config.power, config.game)
        fwd_frame += tr.forwarded.sum(axis=1)
        node_power[:, i] += tr.power[:, 0]
        node_power[:, j] += tr.power[:, 1]
        util += float(tr.utility.sum())
        if not np.isnan(tr.credit).all():
            cmin = min(cmin, float(np.nanmin(tr.credit)))
            cmax = max(cmax, float(np.nanmax(tr.credit)))
    watts, _ = anp(node_power, config.anp_a, config.anp_b)
    n_pairs = len(topo.pairs)
    return TopologyResult(
        int(fwd_frame.sum()), 2 * K * frames * n_pairs, fwd_frame, watts,
        util, 2 * frames * n_pairs, cmin, cmax, n_pairs,
    )


def _simulate_job(args) -> TopologyResult:
    return simulate_topology(*args)


def run_simulation(config: SimConfig, workers: int = 1) -> Metrics:
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_topologies)
    jobs = [(config, s) for s in seeds]
    if workers <= 1:
        results = [_simulate_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    fwd = sum(r.forwarded for r in results)
    opp = sum(r.opportunities for r in results)
    per_frame = np.sum([r.forwarded_per_frame for r in results], axis=0)
    per_frame_opp = sum(2 * config.K * r.n_pairs for r in results)
    watts = math.fsum(r.anp_w for r in results) / len(results)
    return Metrics(
        forwarding_rate=fwd / opp,
        anp_w=watts,
        anp_dbm=to_dbm(watts),
        mean_utility=math.fsum(r.utility_sum for r in results) / sum(r.utility_count for r in results),
        forwarding_per_frame=per_frame / per_frame_opp,
        credit_min=min(r.credit_min for r in results),
        credit_max=max(r.credit_max for r in results),
        n_topologies=len(results),
        mean_pairs=sum(r.n_pairs for r in results) / len(results),
    )


# -- quantization loss ---------------------------------------------------------------


@dataclass
class QuantizationRow:
    H: int
    w_grid: float  # value predicted on the quantized model
    w_continuous: float  # closed-loop value on continuous channels
    w_reference: float
    loss: float


def _train_local(config: SimConfig, H: int) -> tuple[ChannelGrid, PairModel]:
    grid = ChannelGrid.default(H, config.channel.levels[0], config.channel.levels[-1])
    cfg = replace(config, channel=grid, signal_kind="local", channel_mode="unit")
    return grid, build_pair_model(cfg, 1.0)


def _closed_loop_value(config: SimConfig, grid: ChannelGrid, model: PairModel,
                       gains: np.ndarray, seeds) -> float:
    H = grid.size
    total = 0.0
    for run_gains, ss in zip(gains, seeds):
        idx = nearest_level(run_gains, grid)
        signals = signals_from_levels(idx, H, "local")
        strategies = (Sara(model.f1, config.credit, config.eps), Sara(model.f2, config.credit, config.eps))
        tr = run_pairwise_game(strategies, run_gains, signals, config.K, config.eps,
                               np.random.default_rng(ss), config.power, config.game)
        total += float(np.sum(config.lam * tr.utility[:, 0] + (1.0 - config.lam) * tr.utility[:, 1]))
    return total / (gains.shape[0] * gains.shape[1])


def quantization_loss_experiment(config: SimConfig, H_list=(4, 10, 16), n_runs: int = 200,
                                 h_ref: int = 128, seed: int = 0) -> list[QuantizationRow]:
    """Social-welfare loss of grid-trained SARA play on continuous channels.

    Policies are trained with local CSI on an H-level grid and run in a
    two-node SARA closed loop whose channel gains are continuous exponential
    draws; each node's signal is the nearest grid point of its own gains. The
    reference is the same loop driven by a policy trained on an ``h_ref``
    grid. All grids share the draws and monitoring noise.
    """
    ss = np.random.SeedSequence(seed)
    gain_seed, loop_seed = ss.spawn(2)
    gains = sample_state_continuous((1.0,) * 4, np.random.default_rng(gain_seed),
                                    size=n_runs * config.frames).reshape(n_runs, config.frames, 4)
    loop_seeds = loop_seed.spawn(n_runs)
    grid_ref, model_ref = _train_local(config, h_ref)
    w_ref = _closed_loop_value(config, grid_ref, model_ref, gains, loop_seeds)
    rows = []
    for H in H_list:
        grid, model = _train_local(config, H)
        scn = Scenario(config.power, model.dist, make_signal_structure("local", H), config.game)
        w_grid = scn.weighted(
            config.lam,
            DecisionPolicy.from_actions(1, model.f1.actions, model.f1.n_actions),
            DecisionPolicy.from_actions(2, model.f2.actions, model.f2.n_actions),
        )
        w = _closed_loop_value(config, grid, model, gains, loop_seeds)
        rows.append(QuantizationRow(H, w_grid, w, w_ref, (w_ref - w) / w_ref))
    return rows


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()
