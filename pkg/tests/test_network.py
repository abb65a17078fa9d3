from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from fwdgame.network import (
    SimConfig,
    TopologyError,
    anp,
    build_pair_model,
    draw_quantized,
    generate_topology,
    make_strategy,
    pair_model,
    quantization_loss_experiment,
    rows_to_csv,
    run_pairwise_game,
    run_simulation,
    signals_from_levels,
    simulate_topology,
    to_dbm,
)

SMALL = SimConfig(n_nodes=12, area=300.0, frames=8, n_topologies=3, seed=5)


def test_topology_pairs_match_distances():
    cfg = SimConfig(n_nodes=30, area=500.0)
    topo = generate_topology(cfg, np.random.default_rng(0))
    pos = topo.positions
    d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
    expected = {(i, j) for i in range(30) for j in range(i + 1, 30) if d[i, j] <= cfg.radio_range}
    assert {tuple(p) for p in topo.pairs} == expected
    assert (topo.degrees() >= 1).all()
    assert np.allclose(topo.distances, d[topo.pairs[:, 0], topo.pairs[:, 1]])


def test_impossible_topology_is_reported():
    cfg = SimConfig(n_nodes=5, radio_range=0.0, max_topology_attempts=20)
    with pytest.raises(TopologyError, match="after 20 draws"):
        generate_topology(cfg, np.random.default_rng(0))


@pytest.mark.parametrize("kw", [dict(n_nodes=1), dict(selfish_fraction=1.5), dict(eps=0.7),
                                dict(strategy="tft"), dict(channel_mode="x"), dict(K=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)


def test_anp_floor_and_dbm():
    watts, dbm = anp(np.zeros((4, 50)))
    assert watts == 50.0
    assert dbm == pytest.approx(46.98970004336019, rel=1e-12)
    watts, dbm = anp(np.array([[20.0]]), a_coeff=1.0, b_coeff=0.0)
    assert dbm == pytest.approx(43.01029995663981, rel=1e-12)
    assert to_dbm(0.0) == -math.inf
    with pytest.raises(ValueError):
        anp(np.zeros(3), a_coeff=-1.0)


def test_signals_from_levels():
    idx = np.array([[1, 2, 0, 1]])
    assert signals_from_levels(idx, 3, "local").tolist() == [[5, 1]]
    assert signals_from_levels(idx, 3, "global").tolist() == [[46, 46]]
    assert signals_from_levels(idx, 3, "none").tolist() == [[0, 0]]
    with pytest.raises(ValueError):
        signals_from_levels(idx, 3, "custom")


def test_pair_models_are_cached_by_mean_bin():
    cfg = replace(SMALL, channel_mode="path-loss")
    a = pair_model(cfg, 100.0)
    b = pair_model(cfg, 100.01)
    assert a is b
    assert pair_model(cfg, 20.0) is not a


def test_relative_grid_scales_with_the_mean():
    cfg = SimConfig()
    m = build_pair_model(cfg, 0.5)
    assert m.dist.grid.levels[-1] == pytest.approx(5.0)
    assert build_pair_model(replace(cfg, grid_mode="absolute"), 0.5).dist.grid.levels[-1] == pytest.approx(10.0)


def test_sara_pair_forwards_everything_without_selfishness():
    cfg = replace(SMALL, selfish_fraction=0.0)
    model = pair_model(cfg)
    rng = np.random.default_rng(0)
    gains, signals = draw_quantized(model, 30, rng, cfg.signal_kind)
    st = (make_strategy(cfg, model, 1, False), make_strategy(cfg, model, 2, False))
    tr = run_pairwise_game(st, gains, signals, cfg.K, 0.0, rng, cfg.power, cfg.game)
    assert tr.forwarding_rate == 1.0


def test_simulation_metrics_are_sane():
    m = run_simulation(SMALL)
    assert 0.0 <= m.forwarding_rate <= 1.0
    assert m.anp_w >= SMALL.n_nodes * SMALL.anp_b
    assert m.n_topologies == 3 and m.forwarding_per_frame.shape == (SMALL.frames,)
    assert 0.0 <= m.credit_min and m.credit_max <= SMALL.credit.m0 + SMALL.credit.beta


def test_simulation_is_reproducible_across_workers():
    a = run_simulation(SMALL, workers=1)
    b = run_simulation(SMALL, workers=2)
    assert a.forwarding_rate == b.forwarding_rate and a.anp_w == b.anp_w
    assert np.array_equal(a.forwarding_per_frame, b.forwarding_per_frame)


def test_topology_seed_streams_are_independent_of_order():
    seeds = np.random.SeedSequence(1).spawn(2)
    r1 = simulate_topology(SMALL, seeds[1])
    simulate_topology(SMALL, seeds[0])
    assert simulate_topology(SMALL, seeds[1]).forwarded == r1.forwarded


def test_strategy_factory():
    model = pair_model(SMALL)
    for name in ("sara", "gtft", "icarus", "always-defect", "full-cooperation"):
        s = make_strategy(replace(SMALL, strategy=name), model, 1, False)
        assert s.name == name


def test_quantization_loss_small_run():
    rows = quantization_loss_experiment(replace(SimConfig(), frames=5), H_list=(4,), n_runs=10, h_ref=16, seed=0)
    (row,) = rows
    assert row.H == 4 and row.loss == pytest.approx((row.w_reference - row.w_continuous) / row.w_reference)


def test_rows_to_csv_round_trips_floats():
    text = rows_to_csv(("a", "b"), [[0.1, 2], ["x", 1 / 3]])
    assert text == "a,b\n0.1,2\nx,0.3333333333333333\n"
