"""Experiment recipes: each returns a CSV header and its rows."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .channel import StateDistribution
from .config import ExperimentSettings
from .equilibrium import REPORT_COLUMNS, analyze
from .game import ChannelGrid
from .network import SimConfig, quantization_loss_experiment, run_simulation
from .observation import make_signal_structure
from .region import Scenario, algorithm1, pareto_sweep

EXPERIMENTS = (
    "region",
    "equilibrium",
    "forwarding-vs-selfish",
    "forwarding-vs-eps",
    "anp-vs-N",
    "quantization-loss",
)

METRIC_COLUMNS = ("forwarding_rate", "anp_w", "anp_dbm", "mean_utility", "credit_min", "credit_max")

HEADERS = {
    "region": ("signal", "lambda", "Eu1", "Eu2", "W", "converged", "iters"),
    "equilibrium": REPORT_COLUMNS,
    "forwarding-vs-selfish": ("strategy", "selfish_fraction") + METRIC_COLUMNS,
    "forwarding-vs-eps": ("strategy", "eps") + METRIC_COLUMNS,
    "anp-vs-N": ("strategy", "n_nodes") + METRIC_COLUMNS,
    "quantization-loss": ("H", "w_grid", "w_continuous", "w_reference", "loss"),
}


def two_node_scenario(config: SimConfig, H: int | None = None, kind: str | None = None) -> Scenario:
    """Isolated pair with unit-mean gains."""
    grid = config.channel if H is None else ChannelGrid.default(H, config.channel.levels[0], config.channel.levels[-1])
    dist = StateDistribution.from_means((1.0, 1.0, 1.0, 1.0), grid)
    structure = make_signal_structure(kind or config.signal_kind, grid.size)
    return Scenario(config.power, dist, structure, config.game)


def _metric_row(m) -> list:
    return [m.forwarding_rate, m.anp_w, m.anp_dbm, m.mean_utility, _finite(m.credit_min), _finite(m.credit_max)]


def _finite(x: float):
    return x if np.isfinite(x) else ""


def region(config, settings, seed, workers):
    rows = []
    lambdas = np.linspace(0.0, 1.0, settings.lambda_points)
    for kind in settings.signal_kinds:
        scenario = two_node_scenario(config, settings.region_h, kind)
        for pt in pareto_sweep(scenario, lambdas, seed=seed, workers=workers):
            rows.append([kind, round(pt.lam, 12), pt.eu1, pt.eu2, pt.w, int(pt.converged), pt.iters])
    return rows


def equilibrium(config, settings, seed, workers):
    scenario = two_node_scenario(config)
    pt = algorithm1(scenario, config.lam, rng=np.random.default_rng(seed))
    f1, f2 = pt.policies
    return [analyze(scenario, f1, f2, float(eps)).as_row() for eps in settings.eps_values]


def _network_sweep(config, settings, seed, workers, key, values, **fixed):
    rows = []
    for strategy in settings.strategies:
        for v in values:
            cfg = replace(config, strategy=strategy, seed=seed, **{key: v}, **fixed)
            rows.append([strategy, v] + _metric_row(run_simulation(cfg, workers)))
    return rows


def forwarding_vs_selfish(config, settings, seed, workers):
    return _network_sweep(config, settings, seed, workers, "selfish_fraction", settings.fractions)


def forwarding_vs_eps(config, settings, seed, workers):
    return _network_sweep(config, settings, seed, workers, "eps", settings.eps_values)


def anp_vs_n(config, settings, seed, workers):
    return _network_sweep(config, settings, seed, workers, "n_nodes", settings.n_values, channel_mode="path-loss")


def quantization_loss(config, settings, seed, workers):
    rows = quantization_loss_experiment(config, settings.h_values, settings.quant_runs, settings.quant_h_ref, seed)
    return [[r.H, r.w_grid, r.w_continuous, r.w_reference, r.loss] for r in rows]


RECIPES = {
    "region": region,
    "equilibrium": equilibrium,
    "forwarding-vs-selfish": forwarding_vs_selfish,
    "forwarding-vs-eps": forwarding_vs_eps,
    "anp-vs-N": anp_vs_n,
    "quantization-loss": quantization_loss,
}


def full_scale(config: SimConfig, settings: ExperimentSettings) -> tuple[SimConfig, ExperimentSettings]:
    return (
        replace(config, n_topologies=settings.full_scale_topologies),
        replace(settings, n_values=(10, 20, 30, 40, 50), quant_runs=5 * settings.quant_runs, lambda_points=101),
    )


def run_experiment(name: str, config: SimConfig, settings: ExperimentSettings, seed: int, workers: int = 1):
    if name not in RECIPES:
        raise ValueError(f"unknown experiment {name!r}")
    return HEADERS[name], RECIPES[name](config, settings, seed, workers)
