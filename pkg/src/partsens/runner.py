"""Turns a validated config into a Report by dispatching to the library."""
from __future__ import annotations

import time
from fractions import Fraction
from typing import Callable, Dict, Tuple

import numpy as np

from . import aperiodicity as AP
from . import arcs as A
from . import entropy as EN
from . import partitions as PT
from . import sensitivity as SE
from . import systems as SY
from .config import ConfigError, ExperimentConfig, as_rational, as_scalar
from .exact import ExactScalar
from .report import COMPLETED, RESOURCE_LIMIT, Report, Series
from .systems import ResourceLimitError

EXACT_SAMPLE_DENOMINATOR = SE.EXACT_SAMPLE_DENOMINATOR
DEFAULT_DEPTHS = {
    "refine": 10,
    "entropy": 13,
    "smb": 2000,
    "sensitivity": SE.DEFAULT_EXACT_DEPTH,
    "power-consistency": SE.DEFAULT_EXACT_DEPTH,
    "pairwise": SE.DEFAULT_MC_DEPTH,
    "sandwich": 40,
    "aperiodicity": 5,
    "invariance": 4,
}


class PartialResult(Exception):
    """A resource cap stopped the experiment; the partial outcome still gets reported."""

    def __init__(self, message: str, verdict: str, result: dict, series: Series):
        super().__init__(message)
        self.verdict, self.result, self.series = verdict, result, series


def build_system(cfg: ExperimentConfig):
    spec = cfg.system
    kind = spec["type"]
    try:
        if kind == "doubling":
            return SY.doubling()
        if kind == "expanding":
            return SY.expanding(int(spec.get("m", 2)))
        if kind == "rotation":
            return SY.rotation(as_scalar(spec.get("alpha", "0")))
        if kind == "identity":
            return SY.identity()
        if kind == "constant":
            return SY.constant(as_scalar(spec.get("c", "0")))
        if kind == "interval_exchange":
            return SY.interval_exchange(as_scalar(spec.get("a", "1/2")))
        if kind == "bernoulli":
            probs = spec.get("p")
            if not isinstance(probs, list):
                raise ValueError("bernoulli needs a list p of probabilities")
            return SY.BernoulliShift([as_rational(x) for x in probs])
    except (ValueError, TypeError) as exc:
        raise cfg.error(f"bad system: {exc}", "system") from None
    raise cfg.error(f"unknown system type {kind!r}", "system", "type")


def build_partition(cfg: ExperimentConfig, system):
    spec = cfg.partition
    kind = spec.get("type", "binary")
    try:
        if kind == "binary":
            return PT.binary_partition()
        if kind == "breakpoints":
            pts = spec.get("points")
            if not isinstance(pts, list) or not pts:
                raise ValueError("breakpoints needs a nonempty list 'points'")
            return PT.Partition.from_breakpoints([as_scalar(p) for p in pts], provenance="breakpoints")
        if kind == "cylinders":
            return PT.ShiftPartition.cylinders(system, int(spec.get("depth", 1)))
        if kind == "balls":
            centers = spec.get("centers")
            centers = [as_scalar(c) for c in centers] if centers else None
            return SE.covering_ball_partition(as_rational(spec["delta"]), centers)
    except (ValueError, TypeError) as exc:
        raise cfg.error(f"bad partition: {exc}", "partition") from None
    raise cfg.error(f"unknown partition type {kind!r}", "partition", "type")


def _depth(cfg: ExperimentConfig) -> int:
    n = cfg.params.get("n_max")
    return DEFAULT_DEPTHS[cfg.kind] if n is None else n


def _exact_points(seed: int, stream: int, count: int):
    rng = np.random.default_rng([seed, stream])
    return [ExactScalar.of(Fraction(int(k), EXACT_SAMPLE_DENOMINATOR))
            for k in rng.integers(0, EXACT_SAMPLE_DENOMINATOR, size=count)]


def _need_exact(cfg: ExperimentConfig, system) -> None:
    if not isinstance(system, SY.PiecewiseAffineCircleMap):
        raise cfg.error(f"{cfg.kind} needs a circle map", "system", "type")


# -- kinds ------------------------------------------------------------------------------

def _refine(cfg, system, P):
    n_max = _depth(cfg)
    series = Series(["n", "cells", "max_measure", "max_measure_float", "entropy"])
    last = P
    try:
        for k, Pk in enumerate(PT.refinements(system, P, n_max, cfg.params["cell_cap"])):
            m = Pk.max_cell_measure()
            series.rows.append([k, len(Pk), str(m), float(m), EN.partition_entropy(Pk, cfg.params["log_base"])])
            last = Pk
    except ResourceLimitError as exc:
        raise PartialResult(str(exc), f"stopped at P_{len(series.rows) - 1}",
                            {"reached": len(series.rows) - 1}, series) from None
    measures = sorted({str(m) for m in last.measures()}) if len(last) <= 100_000 else None
    result = {
        "depth": n_max,
        "cells": len(last),
        "max_measure": str(last.max_cell_measure()),
        "max_measure_float": float(last.max_cell_measure()),
        "distinct_measures": measures,
        "dropped_cells": getattr(last, "dropped", 0),
    }
    xv = cfg.params.get("cross_validate")
    if xv:
        result["cross_validation"] = _cross_validate(cfg, system, P, dict(xv))
        result["within_3se"] = result["cross_validation"]["within_3se"]
    verdict = f"P_{n_max}: {len(last)} cells, max measure {result['max_measure']}"
    if xv:
        cv = result["cross_validation"]
        verdict += f"; {cv['within_3se']}/{cv['points']} estimates within 3 SE"
    return verdict, result, series


def _cross_validate(cfg, system, P, xv: dict) -> dict:
    _need_exact(cfg, system)
    seed = cfg.params["seed"]
    depth = int(xv.get("depth", 8))
    count = int(xv.get("points", 20))
    samples = int(xv.get("samples", 100_000))
    rows = []
    for i, x in enumerate(_exact_points(seed, 1, count)):
        exact = PT.itinerary_cell(system, P, x, depth).measure
        est = SE.itinerary_mass_estimate(system, P, x, depth, samples, seed=(seed, 2, i))
        se = max(est.stderr, 1.0 / samples)
        z = (est.fraction - float(exact)) / se
        rows.append({"x": str(x), "exact": str(exact), "estimate": est.fraction, "stderr": est.stderr,
                     "within_3se": abs(z) <= 3})
    return {"depth": depth, "samples": samples, "points": count,
            "within_3se": sum(r["within_3se"] for r in rows), "rows": rows}


def _entropy(cfg, system, P):
    s = EN.entropy_rate_series(system, P, _depth(cfg), cfg.params["log_base"], cfg.params["cell_cap"])
    series = Series(["n", "H", "H_over_n"], [[n, h, r] for n, h, r in zip(s.depths, s.entropies, s.rates)])
    result = {"log_base": s.log_base, "rates": s.rates, "cell_counts": s.cell_counts, "truncated": s.truncated}
    verdict = f"H(P_{{n-1}})/n at n={s.depths[-1]}: {s.rates[-1]:.12g} ({s.log_base})" if s.depths else "empty"
    if s.truncated:
        raise PartialResult(s.truncated, verdict, result, series)
    return verdict, result, series


def _smb(cfg, system, P):
    n = _depth(cfg)
    seed = cfg.params["seed"]
    count = cfg.params["seeds"]
    seeds = list(count) if isinstance(count, list) else [seed + i for i in range(int(count))]
    rows = []
    for s in seeds:
        if isinstance(system, SY.BernoulliShift):
            x = system.point(s)
            label = f"seed {s}"
        else:
            x = _exact_points(s, 0, 1)[0]
            label = str(x)
        rows.append([s, label, EN.smb_local_rate(system, P, x, n, cfg.params["log_base"])])
    rates = np.array([r[2] for r in rows])
    result = {"n": n, "rates": rates.tolist(), "mean": float(rates.mean()),
              "stderr": float(rates.std(ddof=1) / np.sqrt(len(rates))) if len(rates) > 1 else 0.0}
    if isinstance(system, SY.BernoulliShift) and isinstance(P, PT.ShiftPartition) and P.depth() == 1:
        target = system.entropy() / EN._base_divisor(cfg.params["log_base"])
        tol = float(cfg.params["tolerance"])
        result.update(target=target, tolerance=tol,
                      within_tolerance=int(np.sum(np.abs(rates - target) <= tol)))
        verdict = f"{result['within_tolerance']}/{len(rates)} local rates within {tol} of {target:.6f}"
    else:
        verdict = f"mean local rate {result['mean']:.6f}"
    return verdict, result, Series(["seed", "point", "rate"], rows)


def _decay_series(v: SE.SensitivityVerdict, prefix=()) -> list:
    return [list(prefix) + [n, str(m), float(m)] for n, m in enumerate(v.decay)]


def _sensitivity(cfg, system, P):
    if isinstance(system, SY.BlackBoxMap):
        raise cfg.error("sensitivity needs an exact engine", "system")
    v = SE.sensitivity_report(system, P, _depth(cfg), cfg.params["threshold"], cfg.params["cell_cap"])
    series = Series(["n", "sup_measure", "sup_measure_float"], _decay_series(v))
    result = v.to_dict()
    if v.resource_limited:
        raise PartialResult(v.message, v.summary(), result, series)
    return v.summary(), result, series


def _power(cfg, system, P):
    _need_exact(cfg, system)
    k = cfg.params["k"]
    if k < 1:
        raise cfg.error("k must be at least 1", "params", "k")
    pc = SE.power_consistency_check(system, P, k, _depth(cfg), cfg.params["threshold"], cfg.params["cell_cap"])
    series = Series(["map", "n", "sup_measure", "sup_measure_float"],
                    _decay_series(pc.base, ["f"]) + _decay_series(pc.power, [f"f^{k}"]))
    result = {"k": k, "agree": pc.agree, "base": pc.base.to_dict(), "power": pc.power.to_dict(),
              "power_partition_cells": pc.power_partition_cells}
    verdict = f"{'agree' if pc.agree else 'DISAGREE'}: {pc.base.summary()} vs {pc.power.summary()}"
    return verdict, result, series


def _pairwise(cfg, system, P):
    p = cfg.params
    est = SE.pairwise_sensitivity_estimate(system, p["delta"], _depth(cfg), p["pair_count"], p["seed"],
                                           float(p["epsilon"]), p["workers"])
    series = Series(["n", "survivors", "fraction"],
                    [[n, c, c / p["pair_count"]] for n, c in enumerate(est.curve)])
    result = est.to_dict()
    if isinstance(system, SY.PiecewiseAffineCircleMap):
        centers = _exact_points(p["seed"], 3, 20)
        masses = [SE.dynamical_ball_mass(system, x, p["delta"], min(_depth(cfg), 30)) for x in centers]
        result["ball_masses"] = sorted({str(m) for m in masses})
    verdict = f"{est.verdict}: surviving fraction {est.surviving_fraction:.6g} (upper {est.upper_bound:.3g})"
    return verdict, result, series


def _sandwich(cfg, system, P):
    p = cfg.params
    r = SE.sandwich_check(system, p["delta"], _depth(cfg), p["samples"], p["seed"], p["ball_samples"], p["workers"])
    series = Series(["term", "estimate", "stderr"], [
        ["pairs_within_delta", r.lower, r.lower_se],
        ["mean_ball_mass", r.middle, r.middle_se],
        ["pairs_within_2delta", r.upper, r.upper_se],
    ])
    verdict = "ordered within 3 sigma" if r.holds else "ORDER VIOLATED"
    return verdict, r.to_dict(), series


def _aperiodicity(cfg, system, P):
    p = cfg.params
    n_max, k_max = _depth(cfg), p["k_max"]
    if n_max < 1:
        raise cfg.error("aperiodicity needs n_max >= 1", "params", "n_max")
    grid = AP.probe_grid(system, n_max, k_max)
    series = Series(["n", "k", "measure", "verdict"], [[g.n, g.k, str(g.measure), g.verdict] for g in grid])
    result: Dict[str, object] = {"grid": [g.to_dict() for g in grid]}
    if p["fix_n_max"]:
        _need_exact(cfg, system)
        fixed = [AP.fixed_point_set(system, n) for n in range(1, p["fix_n_max"] + 1)]
        result["fixed_points"] = [
            {"n": f.n, "isolated": len(f.points), "arc_measure": str(f.measure)} for f in fixed
        ]
    if p["idempotent_k"]:
        _need_exact(cfg, system)
        result["idempotent"] = AP.idempotent_power_check(system, p["idempotent_k"]).to_dict()
    bad = [g for g in grid if g.verdict != "aperiodic"]
    verdict = "aperiodic on grid" if not bad else f"not aperiodic at (n={bad[0].n}, k={bad[0].k}), measure {bad[0].measure}"
    return verdict, result, series


def _invariance(cfg, system, P):
    _need_exact(cfg, system)
    checks = []
    for cell in P.cells:
        r = PT.positively_invariant_check(system, cell)
        checks.append({"cell": cell.to_json(), "status": r.status, "excess": str(r.excess)})
    result: Dict[str, object] = {"cells": checks}
    series = Series(["m", "measure", "measure_float"])
    target = cfg.params.get("set")
    if target is not None:
        if not (isinstance(target, list) and len(target) == 2):
            raise cfg.error("set must be a two-element list [start, end]", "params", "set")
        arcset = A.arc(as_scalar(target[0]), as_scalar(target[1]))
        seq = PT.invariant_intersection_measure(system, arcset, _depth(cfg), cfg.params["cell_cap"])
        series.rows.extend([m, str(v), float(v)] for m, v in enumerate(seq))
        result["intersection_measures"] = [str(v) for v in seq]
    statuses = sorted({c["status"] for c in checks})
    return f"cells: {', '.join(statuses)}", result, series


KIND_HANDLERS: Dict[str, Callable] = {
    "refine": _refine,
    "entropy": _entropy,
    "smb": _smb,
    "sensitivity": _sensitivity,
    "power-consistency": _power,
    "pairwise": _pairwise,
    "sandwich": _sandwich,
    "aperiodicity": _aperiodicity,
    "invariance": _invariance,
}


def _engine(cfg: ExperimentConfig) -> str:
    if cfg.kind in ("pairwise", "sandwich") or (cfg.kind == "refine" and cfg.params.get("cross_validate")):
        return "monte-carlo"
    if cfg.kind == "smb" and cfg.system["type"] == "bernoulli":
        return "monte-carlo"
    return "exact"


def check_expectations(cfg: ExperimentConfig, verdict: str, result: dict) -> dict:
    """Compare each ``expect`` entry with the verdict or a result field."""
    out = {}
    for key, want in cfg.expect.items():
        if key == "verdict":
            got = verdict
            ok = str(got).startswith(str(want))
        elif key.endswith("_at_least") or key.endswith("_below"):
            field_name = key.rsplit("_", 2)[0] if key.endswith("_at_least") else key[: -len("_below")]
            got = result.get(field_name)
            try:
                value = float(got) if isinstance(got, (int, float)) else float(Fraction(str(got)))
                bound = float(as_rational(want))
                ok = value >= bound if key.endswith("_at_least") else value < bound
            except (TypeError, ValueError, ZeroDivisionError):
                ok = False
        else:
            got = result.get(key)
            ok = got == want or str(got) == str(want)
        out[key] = {"expected": want, "got": got, "ok": ok}
    return out


def run_config(cfg: ExperimentConfig) -> Report:
    """Run one experiment; resource caps yield a report with status resource-limit."""
    start = time.perf_counter()
    system = build_system(cfg)
    P = build_partition(cfg, system)
    status, message = COMPLETED, ""
    try:
        verdict, result, series = KIND_HANDLERS[cfg.kind](cfg, system, P)
    except PartialResult as partial:
        status, message = RESOURCE_LIMIT, str(partial)
        verdict, result, series = partial.verdict, partial.result, partial.series
    except ResourceLimitError as exc:
        status, message = RESOURCE_LIMIT, str(exc)
        verdict, result, series = "resource limit reached", {"reached": exc.reached}, Series(["n"])
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), source=cfg.source) from None
    return Report(
        name=cfg.name,
        kind=cfg.kind,
        engine=_engine(cfg),
        config=cfg.echo(),
        status=status,
        verdict=verdict,
        result=result,
        series=series,
        seed=cfg.params.get("seed"),
        wall_time=round(time.perf_counter() - start, 6),
        expectations=check_expectations(cfg, verdict, result),
        message=message,
    )


def system_key(cfg: ExperimentConfig) -> Tuple:
    return tuple(sorted((k, str(v)) for k, v in cfg.system.items()))
