from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fwdgame.channel import StateDistribution, sample_state_indices
from fwdgame.game import ChannelGrid, GameParams, PowerGrid, efficiency
from fwdgame.observation import make_signal_structure, sample_signals
from fwdgame.region import (
    DecisionPolicy,
    OracleTooLarge,
    Scenario,
    algorithm1,
    best_fixed_pair,
    best_response,
    brute_force_oracle,
    build_joint,
    frontier_csv,
    is_best_response,
    pareto_sweep,
    weighted_utility,
)

from instances import random_instance, small_local_instance


def oracle_family(i: int, kind: str, L: int, H: int) -> Scenario:
    """Instances with at most 10**4 pure policy pairs, cost near the default."""
    r = np.random.default_rng([13, i])
    power = PowerGrid((0.0, *np.sort(r.uniform(1, 10, L - 1))))
    grid = ChannelGrid(tuple(np.sort(r.uniform(0.05, 3, H))))
    dist = StateDistribution.from_means(r.uniform(0.5, 2, 4), grid)
    alpha = float(np.exp(r.uniform(np.log(0.005), np.log(0.02))))
    return Scenario(power, dist, make_signal_structure(kind, H), GameParams(alpha=alpha))


def custom_copy(sc: Scenario) -> Scenario:
    """Same instance through the generic (non-factorized) code path."""
    table = sc.structure.dense_table()
    return Scenario(sc.power, sc.dist, make_signal_structure("custom", sc.dist.H, table), sc.params)


def test_policy_validation():
    with pytest.raises(ValueError):
        DecisionPolicy(1, np.array([[0.5, 0.4]]))
    with pytest.raises(ValueError):
        DecisionPolicy(1, np.array([0.5, 0.5]))
    p = DecisionPolicy.from_actions(1, [0, 3], 4)
    assert p.is_pure and list(p.actions()) == [0, 3]
    own, coop = p.marginals(2)
    assert own.tolist() == [[1, 0], [0, 1]] and coop.tolist() == [[1, 0], [0, 1]]


def test_joint_deterministic_policies():
    sc = random_instance(0, "local", L=2, H=2)
    r = np.random.default_rng(0)
    p1 = DecisionPolicy.from_actions(1, r.integers(0, 4, 4), 4)
    p2 = DecisionPolicy.from_actions(2, r.integers(0, 4, 4), 4)
    q = build_joint(sc, p1, p2)
    rho = sc.dist.rho
    nz = q.reshape(len(rho), -1)
    assert ((nz > 0).sum(axis=1) == (rho > 0)).all()
    assert np.allclose(nz.max(axis=1), rho)


def test_joint_uniform_policies():
    sc = random_instance(1, "local", L=2, H=2)
    u1 = DecisionPolicy(1, np.full((4, 4), 0.25))
    u2 = DecisionPolicy(2, np.full((4, 4), 0.25))
    q = build_joint(sc, u1, u2)
    assert np.allclose(q, sc.dist.rho[:, None, None] / 2**4)


def test_joint_matches_monte_carlo():
    sc = random_instance(2, "local", L=2, H=2)
    r = np.random.default_rng(42)
    p1, p2 = sc.random_policies(r)
    q = build_joint(sc, p1, p2)
    n = 10**5
    idx = sample_state_indices(sc.dist, r, size=n)
    states = np.array([sc.dist.state_index(tuple(row)) for row in idx])
    counts = np.zeros_like(q)
    for z in states:
        s1, s2 = sample_signals(sc.structure, int(z), r)
        a1 = r.choice(4, p=p1.table[s1])
        a2 = r.choice(4, p=p2.table[s2])
        counts[z, a1, a2] += 1
    assert np.abs(counts / n - q).max() < 1e-2


def test_joint_dimension_mismatch():
    sc = random_instance(0, "local", L=2, H=2)
    bad = DecisionPolicy.from_actions(1, [0], 4)
    ok = DecisionPolicy.from_actions(2, [0] * 4, 4)
    with pytest.raises(ValueError):
        build_joint(sc, bad, ok)


@pytest.mark.parametrize("kind", ["local", "global", "none"])
def test_expected_utilities_match_dense_joint(kind):
    sc = random_instance(3, kind, L=3, H=2)
    r = np.random.default_rng(1)
    p1, p2 = sc.random_policies(r)
    q = build_joint(sc, p1, p2)
    for lam in (0.0, 0.3, 1.0):
        assert sc.weighted(lam, p1, p2) == pytest.approx(weighted_utility(q, lam, sc), abs=1e-12)


def test_factorized_path_matches_event_path():
    sc = random_instance(4, "local", L=3, H=3)
    alt = custom_copy(sc)
    assert sc.factorized and not alt.factorized
    r = np.random.default_rng(2)
    p1, p2 = sc.random_policies(r)
    for node, other in ((1, p2), (2, p1)):
        a, b = sc.benefits(node, other), alt.benefits(node, other)
        assert np.allclose(a[0], b[0], atol=1e-14) and np.allclose(a[1], b[1], atol=1e-14)
    assert sc.expected_utilities(p1, p2) == pytest.approx(alt.expected_utilities(p1, p2), abs=1e-14)


def test_weighted_utility_endpoints():
    sc = random_instance(5, "local", L=2, H=2)
    p1, p2 = sc.random_policies(np.random.default_rng(3))
    eu1, eu2 = sc.expected_utilities(p1, p2)
    assert sc.weighted(1.0, p1, p2) == pytest.approx(eu1)
    assert sc.weighted(0.0, p1, p2) == pytest.approx(eu2)
    with pytest.raises(ValueError):
        weighted_utility(build_joint(sc, p1, p2), 1.5, sc)


def test_symmetric_instance_relabeling():
    power = PowerGrid((0.0, 5.0))
    dist = StateDistribution.from_means((1, 1, 1, 1), ChannelGrid((0.3, 1.5)))
    sc = Scenario(power, dist, make_signal_structure("local", 2), GameParams())
    r = np.random.default_rng(4)
    p1, p2 = sc.random_policies(r)
    swapped = (DecisionPolicy(1, p2.table), DecisionPolicy(2, p1.table))
    eu1, eu2 = sc.expected_utilities(p1, p2)
    su1, su2 = sc.expected_utilities(*swapped)
    assert (eu1, eu2) == pytest.approx((su2, su1), abs=1e-14)
    assert brute_force_oracle(sc, 0.25)[0] == pytest.approx(brute_force_oracle(sc, 0.75)[0], abs=1e-12)


def test_best_response_against_silent_peer_matches_exhaustive_scan():
    sc = random_instance(6, "local", L=3, H=2)
    lam = 0.5
    silent = DecisionPolicy.constant(2, 4, 9, 0)
    br = best_response(lam, silent, sc, np.random.default_rng(0))
    base = br.actions().copy()
    for s in range(4):
        vals = []
        for a in range(9):
            acts = base.copy()
            acts[s] = a
            q = build_joint(sc, DecisionPolicy.from_actions(1, acts, 9), silent)
            vals.append(weighted_utility(q, lam, sc))
        assert vals[base[s]] >= max(vals) - 1e-12
    # a silent relay makes own traffic worthless and relaying pays only the peer
    assert (base // 3 == 0).all()


def test_best_response_generic_matches_exhaustive_scan():
    sc = random_instance(7, "global", L=2, H=2)
    r = np.random.default_rng(5)
    for lam in (0.2, 0.5, 0.9):
        _, p2 = sc.random_policies(r)
        br = best_response(lam, p2, sc, r)
        base = br.actions().copy()
        rows = sc.dist.rho > 0
        for s in np.flatnonzero(rows)[:6]:
            vals = []
            for a in range(4):
                acts = base.copy()
                acts[s] = a
                vals.append(sc.weighted(lam, DecisionPolicy.from_actions(1, acts, 4), p2))
            assert vals[base[s]] >= max(vals) - 1e-12


def test_single_signal_structure_gives_single_row():
    sc = random_instance(8, "none", L=3, H=2)
    p1, p2 = sc.full_power_policies()
    assert best_response(0.5, p2, sc, np.random.default_rng(0)).table.shape == (1, 9)


@given(st.integers(0, 10**6), st.floats(0.0, 1.0), st.sampled_from(["local", "global", "none"]))
def test_best_response_vertices_and_monotone(seed, lam, kind):
    sc = random_instance(seed % 50, kind, L=3, H=2)
    r = np.random.default_rng(seed)
    p1, p2 = sc.random_policies(r)
    w0 = sc.weighted(lam, p1, p2)
    p1 = best_response(lam, p2, sc, r)
    w1 = sc.weighted(lam, p1, p2)
    p2 = best_response(lam, p1, sc, r)
    w2 = sc.weighted(lam, p1, p2)
    for p in (p1, p2):
        assert np.array_equal(np.sort(p.table, axis=1)[:, -1], np.ones(p.n_signals))
        assert (p.table.sum(axis=1) == 1).all()
    assert w1 >= w0 - 1e-12 and w2 >= w1 - 1e-12


@given(st.integers(0, 10**6), st.floats(0.0, 1.0))
def test_algorithm1_history_nondecreasing(seed, lam):
    sc = random_instance(seed % 50, "local", L=3, H=2)
    r = np.random.default_rng(seed)
    pt = algorithm1(sc, lam, init=sc.random_policies(r), rng=r)
    assert np.all(np.diff(pt.history) >= -1e-12)
    assert pt.w == pytest.approx(lam * pt.eu1 + (1 - lam) * pt.eu2, abs=1e-9)
    assert pt.w == pytest.approx(pt.history[-1], abs=1e-12)


def test_algorithm1_zero_cost_reaches_full_power_quickly():
    power = PowerGrid((0.0, 4.0))
    dist = StateDistribution.from_means((1, 1, 1, 1), ChannelGrid((1.0,)))
    sc = Scenario(power, dist, make_signal_structure("local", 1), GameParams(alpha=0.0))
    pt = algorithm1(sc, 0.5, rng=np.random.default_rng(0))
    assert pt.converged and pt.iters <= 2
    assert [p.actions()[0] for p in pt.policies] == [3, 3]
    assert pt.w == pytest.approx(brute_force_oracle(sc, 0.5)[0])


def test_algorithm1_reports_non_convergence():
    sc = random_instance(9, "local", L=3, H=2)
    pt = algorithm1(sc, 0.5, eta=0.0, max_iters=1, rng=np.random.default_rng(0))
    assert pt.iters == 1 and not pt.converged
    with pytest.raises(ValueError):
        algorithm1(sc, 0.5, eta=-1.0)


def test_algorithm1_near_oracle_on_small_local_instances():
    for i in range(20):
        sc = small_local_instance(i)
        v, _ = brute_force_oracle(sc, 0.5)
        pt = algorithm1(sc, 0.5, rng=np.random.default_rng(i))
        assert pt.w >= v - 0.02 * abs(v)


@pytest.mark.parametrize("kind,L,H", [("none", 3, 2), ("none", 4, 3), ("global", 2, 1),
                                      ("local", 3, 1), ("local", 10, 1), ("none", 10, 1)])
def test_restarts_against_oracle(kind, L, H):
    lams = (0.0, 0.25, 0.5, 0.75, 1.0)
    exact = runs = 0
    for i in range(10):
        sc = oracle_family(i, kind, L, H)
        for lam in lams:
            v, _ = brute_force_oracle(sc, lam, max_pairs=10**4)
            best = -np.inf
            for k in range(10):
                r = np.random.default_rng([13, i, int(lam * 100), k])
                pt = algorithm1(sc, lam, init=sc.random_policies(r), rng=r)
                p1, p2 = pt.policies
                assert pt.w <= v + 1e-12
                assert is_best_response(lam, p1, p2, sc) and is_best_response(lam, p2, p1, sc)
                best = max(best, pt.w)
                exact += pt.w >= v - 1e-9 * max(1.0, abs(v))
                runs += 1
            assert best >= v - 1e-9 * max(1.0, abs(v))
    assert exact / runs >= 0.8


def test_brute_force_single_node_objective():
    power = PowerGrid((0.0, 0.7, 3.0))
    dist = StateDistribution.from_means((1, 1, 1, 1), ChannelGrid((1.3,)))
    prm = GameParams(alpha=0.03)
    sc = Scenario(power, dist, make_signal_structure("local", 1), prm)
    v, (f1, f2) = brute_force_oracle(sc, 1.0)
    lv = np.array(power.levels)
    h = 1.3
    direct = max(efficiency(p * h * q * h / prm.sigma2, prm) - prm.alpha * p for p in lv for q in lv)
    assert v == pytest.approx(direct, abs=1e-12)
    assert f1.actions()[0] % 3 == 0  # node 1 never pays for relaying when only its traffic counts


def test_brute_force_agrees_with_algorithm1_on_single_state():
    for i in range(5):
        sc = oracle_family(i, "local", 4, 1)
        for lam in (0.3, 0.5):
            v, _ = brute_force_oracle(sc, lam)
            pt = algorithm1(sc, lam, rng=np.random.default_rng(i))
            assert pt.w == pytest.approx(v, abs=1e-12)


def test_brute_force_refuses_large_instances():
    sc = random_instance(0, "local", L=3, H=2)
    with pytest.raises(OracleTooLarge):
        brute_force_oracle(sc, 0.5)


def test_information_refinement_only_helps():
    local = random_instance(10, "local", L=3, H=2)
    glob = Scenario(local.power, local.dist, make_signal_structure("global", 2), local.params)
    pt = algorithm1(local, 0.5, rng=np.random.default_rng(0))
    # lift the local solution to global signals and keep improving
    m1, m2 = local.structure.map1, local.structure.map2
    init = (DecisionPolicy(1, pt.policies[0].table[m1]), DecisionPolicy(2, pt.policies[1].table[m2]))
    assert glob.weighted(0.5, *init) == pytest.approx(pt.w, abs=1e-12)
    refined = algorithm1(glob, 0.5, init=init, rng=np.random.default_rng(0))
    assert refined.w >= pt.w - 1e-12


def test_pareto_sweep_endpoints_bound_the_frontier():
    sc = small_local_instance(3)
    pts = pareto_sweep(sc, np.linspace(0, 1, 11), seed=1)
    assert len(pts) == 11
    assert all(p.eu1 <= pts[-1].eu1 + 1e-12 for p in pts)
    assert all(p.eu2 <= pts[0].eu2 + 1e-12 for p in pts)
    csv = frontier_csv(pts)
    assert csv.splitlines()[0] == "lambda,Eu1,Eu2,W,converged,iters"
    assert len(csv.splitlines()) == 12
    with pytest.raises(ValueError):
        pareto_sweep(sc, [1.5])


def test_best_fixed_pair_matches_exhaustive_search():
    sc = random_instance(11, "local", L=3, H=2)
    lam = 0.5
    k1, k2 = best_fixed_pair(sc, lam)
    vals = np.array([[sc.weighted(lam, DecisionPolicy.constant(1, 4, 9, a1), DecisionPolicy.constant(2, 4, 9, a2))
                      for a2 in range(9)] for a1 in range(9)])
    assert vals[k1, k2] == pytest.approx(vals.max(), abs=1e-12)
