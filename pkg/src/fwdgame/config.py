"""Flat ``key = value`` experiment configuration.

Grammar, one statement per line::

    # comment
    key = value             scalar (int, float, bool or word)
    key = v1, v2, v3        list
    include other.cfg       relative to the including file

Dotted keys address nested parameter groups (``credit.mu``, ``game.alpha``,
``power.p_max``...). Later assignments override earlier ones, so an included
base file can be specialized below its ``include`` line.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

from .channel import PathLossParams
from .game import ChannelGrid, GameParams, PowerGrid
from .network import SimConfig
from .strategies import CreditParams, IcarusParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSettings:
    lambda_points: int = 11
    region_h: int = 4
    signal_kinds: tuple[str, ...] = ("global", "local", "none")
    strategies: tuple[str, ...] = ("sara", "icarus", "gtft")
    fractions: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    eps_values: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.5)
    n_values: tuple[int, ...] = (10, 20, 50)
    h_values: tuple[int, ...] = (4, 10, 16)
    quant_runs: int = 200
    quant_h_ref: int = 128
    full_scale_topologies: int = 1200


_GROUPS = {
    "credit": CreditParams,
    "game": GameParams,
    "icarus": IcarusParams,
    "path_loss": PathLossParams,
}
_GRID_KEYS = {
    "power": ("levels", "n_levels", "min_positive", "p_max"),
    "channel": ("levels", "n_levels", "h_min", "h_max"),
}


def _scalar(text: str):
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def _value(text: str):
    if "," in text:
        return tuple(_scalar(p.strip()) for p in text.split(",") if p.strip())
    return _scalar(text)


def parse_file(path: str | Path, _seen: tuple = ()) -> dict[str, tuple]:
    """Assignments as ``key -> (value, "file:line")``, includes expanded."""
    path = Path(path)
    resolved = path.resolve()
    if resolved in _seen:
        raise ConfigError(f"{path}: include cycle")
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    out: dict[str, tuple] = {}
    for lineno, raw in enumerate(lines, start=1):
        where = f"{path}:{lineno}"
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("include"):
            target = line[len("include"):].strip()
            if not target:
                raise ConfigError(f"{where}: include needs a file name")
            out.update(parse_file(path.parent / target, _seen + (resolved,)))
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"{where}: empty key or value")
        out[key] = (_value(value), where)
    return out


def _coerce(value, kind, where: str, key: str):
    try:
        if kind in (int, "int"):
            if isinstance(value, bool) or not float(value).is_integer():
                raise ValueError
            return int(value)
        if kind in (float, "float"):
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if kind in (str, "str"):
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: {key} expects {getattr(kind, '__name__', kind)}, got {value!r}") from None
    return value


def _field_kind(cls, name: str):
    for f in fields(cls):
        if f.name == name:
            return f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "str")
    return None


def _as_tuple(value, conv, where, key):
    items = value if isinstance(value, tuple) else (value,)
    return tuple(_coerce(v, conv, where, key) for v in items)


def build(assignments: dict[str, tuple]) -> tuple[SimConfig, ExperimentSettings]:
    top: dict = {}
    groups: dict[str, dict] = {g: {} for g in _GROUPS}
    grids: dict[str, dict] = {g: {} for g in _GRID_KEYS}
    exp: dict = {}
    exp_fields = {f.name: f for f in fields(ExperimentSettings)}
    sim_fields = {f.name: f for f in fields(SimConfig)}
    for key, (value, where) in assignments.items():
        head, _, tail = key.partition(".")
        if tail and head in _GROUPS:
            kind = _field_kind(_GROUPS[head], tail)
            if kind is None:
                raise ConfigError(f"{where}: unknown key {key!r}")
            groups[head][tail] = _coerce(value, kind, where, key)
        elif tail and head in _GRID_KEYS:
            if tail not in _GRID_KEYS[head]:
                raise ConfigError(f"{where}: unknown key {key!r}")
            if tail == "levels":
                grids[head][tail] = _as_tuple(value, float, where, key)
            else:
                grids[head][tail] = _coerce(value, int if tail == "n_levels" else float, where, key)
        elif key in exp_fields:
            default = getattr(ExperimentSettings(), key)
            if isinstance(default, tuple):
                conv = type(default[0]) if default else str
                exp[key] = _as_tuple(value, conv, where, key)
            else:
                exp[key] = _coerce(value, type(default), where, key)
        elif key in sim_fields and key not in _GROUPS and key not in _GRID_KEYS:
            exp_default = getattr(SimConfig(), key)
            top[key] = _coerce(value, type(exp_default), where, key)
        else:
            raise ConfigError(f"{where}: unknown key {key!r}")
    try:
        for name, cls in _GROUPS.items():
            if groups[name]:
                top[name] = cls(**groups[name])
        if grids["power"]:
            g = grids["power"]
            top["power"] = PowerGrid(g["levels"]) if "levels" in g else PowerGrid.default(**g)
        if grids["channel"]:
            g = grids["channel"]
            top["channel"] = ChannelGrid(g["levels"]) if "levels" in g else ChannelGrid.default(**g)
        return SimConfig(**top), ExperimentSettings(**exp)
    except (TypeError, ValueError) as exc:
        where = _blame(assignments, str(exc))
        raise ConfigError(f"{where}: {exc}") from None


def _blame(assignments: dict[str, tuple], message: str) -> str:
    # point at the line that set the offending key when it can be guessed
    for key, (_, where) in assignments.items():
        leaf = key.rpartition(".")[2]
        if leaf and leaf in message:
            return where
    return next(iter(assignments.values()))[1] if assignments else "<config>"


def load_config(path: str | Path | None = None) -> tuple[SimConfig, ExperimentSettings]:
    return build(parse_file(path or default_config_path()))


def default_config_path() -> Path:
    return Path(str(resources.files("fwdgame") / "data" / "defaults.cfg"))


@dataclass
class ValidationReport:
    config: SimConfig | None = None
    settings: ExperimentSettings | None = None
    warnings: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_config(path: str | Path) -> ValidationReport:
    report = ValidationReport()
    try:
        assignments = parse_file(path)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report.config, report.settings = build(assignments)
    except ConfigError as exc:
        report.errors.append(str(exc))
        return report
    for w in caught:
        report.warnings.append(str(w.message))
    cp = report.config.credit
    if cp.mu < 2 * cp.beta:
        where = assignments.get("credit.mu", assignments.get("credit.beta", (None, str(path))))[1]
        report.warnings.append(
            f"{where}: mu={cp.mu} < 2*beta={2 * cp.beta}: the 'nodes have always enough credits' condition is violated"
        )
        report.warnings = [w for w in report.warnings if "no longer guaranteed" not in w]
    return report


def config_dict(config: SimConfig, settings: ExperimentSettings) -> dict:
    def clean(obj):
        if isinstance(obj, dict):
            return {k: clean(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [clean(v) for v in obj]
        return obj

    return {"sim": clean(asdict(config)), "experiment": clean(asdict(settings))}


def config_hash(config: SimConfig, settings: ExperimentSettings) -> str:
    blob = json.dumps(config_dict(config, settings), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()

