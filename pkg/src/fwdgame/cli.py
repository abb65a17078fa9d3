"""Command-line entry point.

    fwdgame --experiment region --seed 1 --out results/
    fwdgame --config my.cfg --validate

Exit status: 0 on success, 1 when a run fails, 2 for usage or config errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, config_dict, config_hash, default_config_path, load_config, validate_config
from .experiments import EXPERIMENTS, run_experiment, full_scale
from .network import rows_to_csv

log = logging.getLogger("fwdgame")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fwdgame", description="Forwarding-game experiments.")
    p.add_argument("--config", type=Path, default=None, help="key = value config file (default: bundled defaults.cfg)")
    p.add_argument("--experiment", choices=EXPERIMENTS, help="experiment to run")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory (default .)")
    p.add_argument("--full-scale", action="store_true", help="1200 topologies and denser sweeps (slow)")
    p.add_argument("--validate", action="store_true", help="check the config, print it and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _validate(path: Path) -> int:
    report = validate_config(path)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    for e in report.errors:
        print(f"error: {e}", file=sys.stderr)
    if not report.ok:
        return 2
    print(json.dumps(config_dict(report.config, report.settings), indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    cfg_path = args.config or default_config_path()
    if args.validate:
        return _validate(cfg_path)
    if args.experiment is None:
        parser.print_usage(sys.stderr)
        print("fwdgame: error: --experiment is required", file=sys.stderr)
        return 2
    if args.workers < 1:
        print("fwdgame: error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        config, settings = load_config(cfg_path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.full_scale:
        config, settings = full_scale(config, settings)
    config = config.__class__(**{**config.__dict__, "seed": args.seed})

    try:
        log.info("running %s (seed %d, %d workers)", args.experiment, args.seed, args.workers)
        header, rows = run_experiment(args.experiment, config, settings, args.seed, args.workers)
        args.out.mkdir(parents=True, exist_ok=True)
        text = rows_to_csv(header, rows)
        csv_path = args.out / f"{args.experiment}-{args.seed}.csv"
        csv_path.write_text(text)
        manifest = {
            "experiment": args.experiment,
            "seed": args.seed,
            "config_hash": config_hash(config, settings),
            "config_file": str(cfg_path),
            "csv": csv_path.name,
            "csv_sha256": hashlib.sha256(text.encode()).hexdigest(),
            "rows": len(rows),
            "version": __version__,
            "config": config_dict(config, settings),
        }
        (args.out / f"{args.experiment}-{args.seed}.manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )
    except Exception as exc:  # surfaced as a runtime failure
        print(f"error: {args.experiment} failed: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1
    print(csv_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
