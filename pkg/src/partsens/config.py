"""Experiment configs: YAML files turned into validated, normalized settings.

Errors carry the line of the offending key so a bad config can be fixed
without guessing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from .exact import ExactScalar, parse_scalar, registered_constants

KINDS = (
    "refine",
    "entropy",
    "smb",
    "sensitivity",
    "power-consistency",
    "pairwise",
    "sandwich",
    "aperiodicity",
    "invariance",
)
MONTE_CARLO_KINDS = {"smb", "pairwise", "sandwich"}
DELTA_KINDS = {"pairwise", "sandwich"}
SYSTEM_TYPES = ("doubling", "expanding", "rotation", "identity", "constant", "interval_exchange", "bernoulli")
PARTITION_TYPES = ("binary", "breakpoints", "cylinders", "balls")

DEFAULTS: Dict[str, Any] = {
    "n_max": None,
    "threshold": "1/1000",
    "delta": None,
    "pair_count": 10_000,
    "samples": 10_000,
    "ball_samples": 1000,
    "seed": None,
    "log_base": "e",
    "cell_cap": 1_000_000,
    "epsilon": 0.01,
    "k": 2,
    "k_max": 0,
    "fix_n_max": 0,
    "idempotent_k": None,
    "seeds": 10,
    "tolerance": 0.05,
    "cross_validate": None,
    "set": None,
    "workers": 1,
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, source: str = ""):
        where = f"{source}:{line}: " if line is not None else (f"{source}: " if source else "")
        super().__init__(where + message)
        self.line = line


def _plain(node: yaml.Node, path: Tuple, lines: Dict[Tuple, int]):
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for key_node, value_node in node.value:
            key = key_node.value
            out[key] = _plain(value_node, path + (key,), lines)
            # the value overwrote the entry with its own line; keys point at the key
            lines[path + (key,)] = key_node.start_mark.line + 1
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_plain(v, path + (i,), lines) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


def load_yaml(text: str, source: str = "") -> Tuple[Any, Dict[Tuple, int]]:
    """Parse YAML, returning plain data and the line of every key path."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {exc}", mark.line + 1 if mark else None, source) from None
    lines: Dict[Tuple, int] = {}
    if node is None:
        return None, lines
    return _plain(node, (), lines), lines


def as_rational(value: Any) -> Fraction:
    """Rationals from 'p/q' strings, integers or decimal literals (read digit by digit)."""
    if isinstance(value, bool):
        raise ValueError(f"expected a rational, got {value!r}")
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"not a rational: {value!r}") from None
    raise ValueError(f"expected a rational, got {value!r}")


def as_scalar(value: Any) -> ExactScalar:
    if isinstance(value, str) and any(c.isalpha() for c in value):
        return parse_scalar(value)
    return ExactScalar.of(as_rational(value))


@dataclass
class ExperimentConfig:
    name: str
    kind: str
    system: Dict[str, Any]
    partition: Dict[str, Any]
    params: Dict[str, Any]
    expect: Dict[str, Any] = field(default_factory=dict)
    source: str = ""
    lines: Dict[Tuple, int] = field(default_factory=dict, repr=False, compare=False)

    def echo(self) -> dict:
        """Config as plain JSON-ready data (rationals kept as strings)."""
        return {
            "name": self.name,
            "kind": self.kind,
            "system": _jsonable(self.system),
            "partition": _jsonable(self.partition),
            "params": _jsonable(self.params),
            "expect": _jsonable(self.expect),
        }

    def error(self, message: str, *path) -> ConfigError:
        return ConfigError(message, self.lines.get(tuple(path)), self.source)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (Fraction, ExactScalar)):
        return str(value)
    return value


def load_config(path, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", source=str(path)) from None
    return parse_config(text, source=str(path), overrides=overrides, default_name=path.stem)


def parse_config(
    text: str, source: str = "", overrides: Optional[Dict[str, Any]] = None, default_name: str = "experiment"
) -> ExperimentConfig:
    data, lines = load_yaml(text, source)
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", 1, source)
    known = {"name", "kind", "system", "partition", "params", "expect"}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown top-level key {key!r}", lines.get((key,)), source)
    kind = data.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}",
                          lines.get(("kind",), 1), source)
    params = dict(DEFAULTS)
    raw_params = data.get("params") or {}
    if not isinstance(raw_params, dict):
        raise ConfigError("params must be a mapping", lines.get(("params",)), source)
    for key, value in raw_params.items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown parameter {key!r}", lines.get(("params", key)), source)
        params[key] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            params[key] = value
    cfg = ExperimentConfig(
        name=str(data.get("name") or default_name),
        kind=kind,
        system=dict(data.get("system") or {}),
        partition=dict(data.get("partition") or {"type": "binary"}),
        params=params,
        expect=dict(data.get("expect") or {}),
        source=source,
        lines=lines,
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    p = cfg.params
    stype = cfg.system.get("type")
    if stype not in SYSTEM_TYPES:
        raise cfg.error(f"unknown system type {stype!r}; expected one of {', '.join(SYSTEM_TYPES)}", "system", "type")
    for key in ("threshold", "delta", "epsilon", "tolerance"):
        if p.get(key) is not None:
            try:
                p[key] = as_rational(p[key])
            except ValueError as exc:
                raise cfg.error(str(exc), "params", key) from None
    if p["threshold"] <= 0:
        raise cfg.error("threshold must be positive", "params", "threshold")
    if cfg.kind in DELTA_KINDS:
        if p["delta"] is None:
            raise cfg.error(f"{cfg.kind} needs params.delta", "params")
    if p["delta"] is not None and not (0 < p["delta"] < Fraction(1, 2)):
        raise cfg.error(f"delta must lie in (0, 1/2), got {p['delta']}", "params", "delta")
    if cfg.kind == "sandwich" and p["delta"] is not None and not 2 * p["delta"] < 1:
        raise cfg.error("sandwich needs 2*delta < 1", "params", "delta")
    needs_seed = cfg.kind in MONTE_CARLO_KINDS or (cfg.kind == "refine" and p.get("cross_validate"))
    if needs_seed and p["seed"] is None:
        raise cfg.error(f"{cfg.kind} is a Monte Carlo experiment and needs params.seed", "params")
    if p["seed"] is not None and (not isinstance(p["seed"], int) or p["seed"] < 0):
        raise cfg.error("seed must be a nonnegative integer", "params", "seed")
    if str(p["log_base"]) not in ("e", "2"):
        raise cfg.error("log_base must be 'e' or '2'", "params", "log_base")
    p["log_base"] = str(p["log_base"])
    for key in ("n_max", "pair_count", "samples", "ball_samples", "cell_cap", "k", "k_max", "fix_n_max", "workers"):
        v = p.get(key)
        if v is not None and (not isinstance(v, int) or isinstance(v, bool) or v < 0):
            raise cfg.error(f"{key} must be a nonnegative integer", "params", key)
    if stype == "rotation" and "alpha" in cfg.system:
        alpha = cfg.system["alpha"]
        if isinstance(alpha, str) and any(c.isalpha() for c in alpha):
            names = [t for t in alpha.replace("*", " ").replace("+", " ").replace("-", " ").split()
                     if t[0].isalpha()]
            unknown = [n for n in names if n not in registered_constants()]
            if unknown:
                raise cfg.error(f"unknown constant {unknown[0]!r}; registered: {', '.join(registered_constants())}",
                                "system", "alpha")
    ptype = cfg.partition.get("type", "binary")
    if ptype not in PARTITION_TYPES:
        raise cfg.error(f"unknown partition type {ptype!r}; expected one of {', '.join(PARTITION_TYPES)}",
                        "partition", "type")
    if ptype == "balls":
        try:
            r = as_rational(cfg.partition.get("delta"))
        except ValueError as exc:
            raise cfg.error(str(exc), "partition", "delta") from None
        if not 0 < r < Fraction(1, 2):
            raise cfg.error(f"ball radius must lie in (0, 1/2), got {r}", "partition", "delta")
    if (stype == "bernoulli") != (ptype == "cylinders"):
        raise cfg.error("Bernoulli systems take cylinder partitions and circle maps take arc partitions",
                        "partition", "type")
    if stype == "bernoulli" and cfg.kind in ("pairwise", "sandwich", "power-consistency", "invariance"):
        raise cfg.error(f"{cfg.kind} is not available for Bernoulli systems", "kind")


def load_manifest(path) -> Tuple[List[Path], int]:
    """Config paths (relative to the manifest) and the worker cap."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read manifest: {exc}", source=str(path)) from None
    data, lines = load_yaml(text, str(path))
    if data is None:
        return [], 1
    if isinstance(data, list):
        data = {"configs": data}
    if not isinstance(data, dict):
        raise ConfigError("manifest must be a mapping with a 'configs' list", 1, str(path))
    configs = data.get("configs") or []
    if not isinstance(configs, list):
        raise ConfigError("'configs' must be a list", lines.get(("configs",)), str(path))
    workers = data.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers must be a positive integer", lines.get(("workers",)), str(path))
    return [path.parent / str(c) for c in configs], workers
