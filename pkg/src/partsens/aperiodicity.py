"""Exact periodic-point analysis for piecewise-affine circle maps."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cmp_to_key
from typing import List, Optional

from . import arcs as A
from .arcs import ArcSet
from .exact import ONE, ZERO, ExactScalar, compare, reduce_mod_1
from .systems import (
    DEFAULT_BRANCH_CAP,
    BernoulliShift,
    PiecewiseAffineCircleMap,
    ResourceLimitError,
    compose_power,
)

POINT_CAP = 200_000


@dataclass
class FixedPointSet:
    """Fix(f^n) as isolated points plus arcs on which f^n is the identity."""

    n: int
    points: List[ExactScalar]
    arcs: ArcSet

    @property
    def measure(self) -> ExactScalar:
        return A.measure(self.arcs)

    @property
    def is_empty(self) -> bool:
        return not self.points and not self.arcs

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "points": [str(p) for p in self.points],
            "arcs": [[str(a), str(b)] for a, b in self.arcs],
        }


def _is_integer(value: ExactScalar) -> bool:
    return value.is_rational and value.q0.denominator == 1


def _solutions(start: ExactScalar, end: ExactScalar, slope: Fraction, intercept: ExactScalar, target: ExactScalar):
    """Points x in [start, end) with slope*x + intercept = target + j for some integer j."""
    lo = intercept + start * slope - target
    hi = intercept + end * slope - target
    if compare(lo, hi) > 0:
        lo, hi = hi, lo
    out = []
    for j in range(lo.floor(), hi.floor() + 1):
        x = (target + j - intercept) / slope
        if compare(start, x) <= 0 and compare(x, end) < 0:
            out.append(x)
    return out


def fixed_point_set(system: PiecewiseAffineCircleMap, n: int, branch_cap: int = DEFAULT_BRANCH_CAP) -> FixedPointSet:
    """Solve f^n(x) = x branch by branch on f^n."""
    if n < 1:
        raise ValueError("n must be at least 1")
    g = compose_power(system, n, branch_cap)
    points: List[ExactScalar] = []
    arcs = []
    for br in g.branches:
        if br.slope == 1:
            if _is_integer(br.intercept):
                arcs.append((br.start, br.end))
            continue
        # (s - 1) x + b = j
        points.extend(_solutions(br.start, br.end, br.slope - 1, br.intercept, ZERO))
    arcset = A.normalize(arcs)
    points = [p for p in points if not A.contains(arcset, p)]
    points.sort(key=cmp_to_key(compare))
    return FixedPointSet(n, points, arcset)


def _point_preimages(system: PiecewiseAffineCircleMap, p: ExactScalar):
    """f^-1({p}) split into isolated points and whole branch domains (slope-0 branches)."""
    pts, arcs = [], []
    for br in system.branches:
        if br.slope == 0:
            if reduce_mod_1(br.intercept) == p:
                arcs.append((br.start, br.end))
            continue
        pts.extend(_solutions(br.start, br.end, br.slope, br.intercept, p))
    return pts, arcs


@dataclass
class ProbeResult:
    n: int
    k: int
    measure: object
    fixed: Optional[FixedPointSet] = None

    @property
    def verdict(self) -> str:
        return "aperiodic" if self.measure == 0 else "not-aperiodic"

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "measure": str(self.measure), "verdict": self.verdict}


def eventual_aperiodicity_probe(system, n: int, k: int, point_cap: int = POINT_CAP) -> ProbeResult:
    """mu of the union of f^-i(Fix(f^n)) for i = 0..k, computed exactly.

    x satisfies f^{n+i}(x) = f^i(x) exactly when f^i(x) is in Fix(f^n), so the
    union is the set of points that are periodic from some time i <= k on.
    """
    if n < 1 or k < 0:
        raise ValueError("need n >= 1 and k >= 0")
    if isinstance(system, BernoulliShift):
        # eventually periodic sequences are countable; only a one-symbol alphabet has atoms
        return ProbeResult(n, k, Fraction(1) if system.alphabet_size == 1 else Fraction(0))
    fixed = fixed_point_set(system, n)
    arcs = fixed.arcs
    layer_arcs = fixed.arcs
    layer_pts = list(fixed.points)
    track_points = any(br.slope == 0 for br in system.branches)
    total = arcs
    for _ in range(k):
        layer_arcs = system.preimage(layer_arcs)
        new_pts = []
        if track_points:
            extra = []
            for p in layer_pts:
                pts, full = _point_preimages(system, p)
                new_pts.extend(pts)
                extra.extend(full)
                if len(new_pts) > point_cap:
                    raise ResourceLimitError(f"more than {point_cap} preimage points")
            layer_arcs = A.union(layer_arcs, A.normalize(extra))
        layer_pts = new_pts
        total = A.union(total, layer_arcs)
    measure = A.measure(total)
    return ProbeResult(n, k, measure.q0 if measure.is_rational else measure, fixed)


def probe_grid(system, n_max: int, k_max: int) -> List[ProbeResult]:
    return [eventual_aperiodicity_probe(system, n, k) for n in range(1, n_max + 1) for k in range(k_max + 1)]


@dataclass
class IdempotentCheck:
    """Outcome of comparing f^k with f; ``witness`` is set when they differ."""

    k: int
    satisfies: bool
    witness: Optional[ExactScalar] = None
    fk_value: Optional[ExactScalar] = None
    f_value: Optional[ExactScalar] = None
    note: str = ""

    def to_dict(self) -> dict:
        out = {"k": self.k, "result": "satisfies_fk_eq_f" if self.satisfies else "differs", "note": self.note}
        if not self.satisfies:
            out.update(witness=str(self.witness), fk_value=str(self.fk_value), f_value=str(self.f_value))
        return out


def idempotent_power_check(system: PiecewiseAffineCircleMap, k: int) -> IdempotentCheck:
    """Exact branch-level comparison of f^k and f on their common refinement."""
    if k < 2:
        raise ValueError("k must be at least 2")
    g = compose_power(system, k)
    cuts = sorted({b.start for b in g.branches} | {b.start for b in system.branches}, key=cmp_to_key(compare))
    cuts.append(ONE)
    for lo, hi in zip(cuts, cuts[1:]):
        bg = g.branches[g.branch_index(lo)]
        bf = system.branches[system.branch_index(lo)]
        if bg.slope != bf.slope or not _is_integer(bg.intercept - bf.intercept):
            w = (lo + hi) / 2
            return IdempotentCheck(k, False, w, g(w), system(w))
    return IdempotentCheck(
        k, True, note="f^k = f: sensitivity verdicts for this system must not be SensitiveUpTo"
    )
