"""Finite-depth verdicts on measure-sensitive partitions, dynamical balls and
pairwise sensitivity.

Verdicts never claim a limit.  ``SensitiveUpTo`` means the largest cell of
P_n fell below the threshold by the last depth examined;
``StabilizedNonSensitive`` is the one certain negative outcome, reached when
P_{n+1} == P_n so the refinement is constant from then on.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from . import arcs as A
from .arcs import ArcCell, ArcSet
from .exact import ZERO, ExactScalar, ScalarLike, compare
from .partitions import (
    DEFAULT_CELL_CAP,
    AnyPartition,
    Partition,
    iterated_join,
    itinerary_cell,
    refinements,
)
from .systems import (
    BlackBoxMap,
    PiecewiseAffineCircleMap,
    ResourceLimitError,
    as_black_box,
    compose_power,
)

log = logging.getLogger(__name__)

SENSITIVE = "SensitiveUpTo"
STABILIZED = "StabilizedNonSensitive"
INCONCLUSIVE = "Inconclusive"

DEFAULT_THRESHOLD = Fraction(1, 1000)
DEFAULT_EXACT_DEPTH = 30
DEFAULT_MC_DEPTH = 60
DEFAULT_EPSILON = 1e-2
CHUNK = 1024
EXACT_SAMPLE_DENOMINATOR = 2**61 - 1


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def _lt(measure, bound: Fraction) -> bool:
    if isinstance(measure, ExactScalar):
        return compare(measure, bound) < 0
    return measure < bound


@dataclass
class SensitivityVerdict:
    """Finite-depth classification of a partition.

    ``depth`` and ``bound`` read as (n_max, achieved bound) for
    SensitiveUpTo, (stabilization depth, floor mass) for
    StabilizedNonSensitive and (last depth, last bound) for Inconclusive.
    """

    status: str
    depth: int
    bound: Union[ExactScalar, Fraction]
    decay: List[Union[ExactScalar, Fraction]]
    witnesses: list = field(default_factory=list)
    message: str = ""
    resource_limited: bool = False

    @property
    def is_sensitive(self) -> bool:
        return self.status == SENSITIVE

    def summary(self) -> str:
        return f"{self.status}({self.depth}, {self.bound})"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "depth": self.depth,
            "bound": str(self.bound),
            "bound_float": float(self.bound),
            "decay": [str(v) for v in self.decay],
            "witnesses": self.witnesses,
            "message": self.message,
            "resource_limited": self.resource_limited,
        }


def sensitivity_report(
    system,
    P: AnyPartition,
    n_max: int = DEFAULT_EXACT_DEPTH,
    threshold=DEFAULT_THRESHOLD,
    cell_cap: int = DEFAULT_CELL_CAP,
) -> SensitivityVerdict:
    """Track sup of mu over the cells of P_n for n = 0..n_max and classify."""
    threshold = _as_fraction(threshold)
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if isinstance(system, BlackBoxMap):
        raise ValueError("sensitivity reports need an exact engine")
    decay = []
    prev = None
    try:
        for k, Pk in enumerate(refinements(system, P, n_max + 1, cell_cap)):
            if prev is not None and len(Pk) == len(prev) and Pk == prev:
                return SensitivityVerdict(STABILIZED, k - 1, decay[-1], decay, _witnesses(prev))
            if k > n_max:
                break
            decay.append(Pk.max_cell_measure())
            prev = Pk
            # P_{n_max+1} is only needed to detect stabilization of a coarse partition
            if k == n_max and _lt(decay[-1], threshold):
                break
    except ResourceLimitError as exc:
        if len(decay) <= n_max:
            return SensitivityVerdict(
                INCONCLUSIVE, len(decay) - 1, decay[-1] if decay else Fraction(1), decay,
                _witnesses(prev) if prev is not None else [], message=str(exc), resource_limited=True,
            )
    final = decay[-1]
    if _lt(final, threshold):
        return SensitivityVerdict(SENSITIVE, n_max, final, decay, _witnesses(prev))
    return SensitivityVerdict(INCONCLUSIVE, n_max, final, decay, _witnesses(prev),
                              message="sup cell measure still above threshold")


def _witnesses(P: AnyPartition, limit: int = 4) -> list:
    """A few cells attaining the sup measure."""
    top = P.max_cell_measure()
    approx = P.cell_measures_float()
    candidates = np.flatnonzero(approx >= approx.max() * (1 - 1e-9))
    out = []
    for k in candidates:
        cell = P.cell(int(k))
        if cell.measure == top:
            out.append(cell.to_json())
            if len(out) >= limit:
                break
    return out


def p_infinity_mass(system, P: AnyPartition, x, n_max: int) -> list:
    """mu(P_n(x)) for n = 0..n_max; nonincreasing, tends to mu(P_inf(x))."""
    return [itinerary_cell(system, P, x, n).measure for n in range(n_max + 1)]


@dataclass
class PowerConsistency:
    k: int
    base: SensitivityVerdict
    power: SensitivityVerdict
    power_partition_cells: int

    @property
    def agree(self) -> bool:
        return self.base.status == self.power.status


def power_consistency_check(
    system: PiecewiseAffineCircleMap,
    P: Partition,
    k: int,
    n_max: int = DEFAULT_EXACT_DEPTH,
    threshold=DEFAULT_THRESHOLD,
    cell_cap: int = DEFAULT_CELL_CAP,
) -> PowerConsistency:
    """Compare verdicts for (f, P) and (f^k, Q) with Q the join of f^-i(P), i <= k.

    Depth m under f^k sees P_{k(m+1)}, so m is chosen to match n_max.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    base = sensitivity_report(system, P, n_max, threshold, cell_cap)
    g = compose_power(system, k)
    Q = iterated_join(system, P, k, cell_cap)
    m = max(1, n_max // k - 1)
    power = sensitivity_report(g, Q, m, threshold, cell_cap)
    return PowerConsistency(k, base, power, len(Q))


def covering_ball_partition(delta: ScalarLike, centers: Optional[Sequence[ScalarLike]] = None) -> Partition:
    """Disjointified cover of the circle by balls of radius delta.

    With no centers given, ceil(1/(2 delta)) equally spaced centers are used.
    """
    delta = ExactScalar.of(delta)
    if centers is None:
        count = math.ceil(1 / (2 * float(delta)) - 1e-12)
        while compare(delta * (2 * count), 1) < 0:
            count += 1
        centers = [Fraction(j, count) for j in range(count)]
    covered: ArcSet = A.EMPTY
    cells = []
    for c in centers:
        c = ExactScalar.of(c)
        ball = A.arc(c - delta, c + delta)
        piece = A.difference(ball, covered)
        if piece:
            cells.append(piece)
        covered = A.union(covered, ball)
    if covered != A.FULL:
        raise ValueError("balls do not cover the circle")
    return Partition.from_cells(cells, provenance=f"balls({delta})")


# -- dynamical balls ----------------------------------------------------------------------

def _check_delta(delta) -> Fraction:
    d = _as_fraction(delta) if not isinstance(delta, ExactScalar) else delta
    dv = d if isinstance(d, Fraction) else None
    if dv is not None and not (0 < dv < Fraction(1, 2)):
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    if isinstance(d, ExactScalar) and not (compare(d, ZERO) > 0 and compare(d, Fraction(1, 2)) < 0):
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    return d


@dataclass
class DynamicalBall:
    """Points within delta of the orbit of ``center`` up to time ``depth``."""

    center: object
    delta: object
    depth: int
    cell: Optional[ArcCell] = None
    estimate: Optional[float] = None
    stderr: Optional[float] = None

    @property
    def mass(self):
        return self.cell.measure if self.cell is not None else self.estimate

    def __contains__(self, y) -> bool:
        if self.cell is None:
            raise TypeError("sampled balls carry no explicit set")
        return y in self.cell


def dynamical_ball(
    system, x, delta, n: int, arc_cap: int = 100_000, samples: int = 100_000, seed: int = 0
) -> DynamicalBall:
    """{y : d(f^i x, f^i y) <= delta for i <= n}.

    Exact engines propagate arc unions backwards through the branches; a
    black box (or an exact computation that outgrows ``arc_cap``) falls back
    to a seeded Monte Carlo estimate.
    """
    delta = _check_delta(delta)
    if isinstance(system, PiecewiseAffineCircleMap):
        x = ExactScalar.of(x)
        orbit = [x]
        for _ in range(n):
            orbit.append(system(orbit[-1]))
        current = A.arc(orbit[n] - delta, orbit[n] + delta)
        for i in range(n - 1, -1, -1):
            current = A.intersect(A.arc(orbit[i] - delta, orbit[i] + delta), system.preimage(current))
            if len(current) > arc_cap:
                log.warning("dynamical ball at %s exceeded %d arcs; using Monte Carlo", x, arc_cap)
                return dynamical_ball(as_black_box(system), float(x), delta, n, samples=samples, seed=seed)
        return DynamicalBall(x, delta, n, cell=ArcCell(current))
    if isinstance(system, BlackBoxMap):
        hits = 0
        x0 = float(x)
        d = float(delta)
        for chunk, size in _chunks(samples):
            rng = np.random.default_rng([seed, chunk])
            y = system.sample(rng, size)
            xs = np.full(size, x0)
            alive = system.metric(xs, y) <= d
            for _ in range(n):
                xs, y = system.iterate(xs), system.iterate(y)
                alive &= system.metric(xs, y) <= d
            hits += int(alive.sum())
        p = hits / samples
        return DynamicalBall(x, delta, n, estimate=p, stderr=math.sqrt(p * (1 - p) / samples))
    raise ValueError("dynamical balls need a circle map or a black box with a metric")


def dynamical_ball_mass(system, x, delta, n: int, **kw):
    """Exact mass (exact engines) or (estimate, stderr) for a black box."""
    ball = dynamical_ball(system, x, delta, n, **kw)
    if ball.cell is not None:
        return ball.mass
    return ball.estimate, ball.stderr


# -- Monte Carlo ----------------------------------------------------------------------------

def _chunks(count: int):
    """(chunk index, size) pairs; sample i always lands in chunk i // CHUNK."""
    for c in range(0, math.ceil(count / CHUNK)):
        yield c, min(CHUNK, count - c * CHUNK)


def _black_box(system) -> BlackBoxMap:
    if isinstance(system, BlackBoxMap):
        return system
    if isinstance(system, PiecewiseAffineCircleMap):
        return as_black_box(system)
    raise ValueError(f"{type(system).__name__} has no metric for pair sampling")


def _map_chunks(fn: Callable[[int, int], np.ndarray], count: int, workers: int) -> np.ndarray:
    jobs = list(_chunks(count))
    if workers <= 1:
        parts = [fn(c, s) for c, s in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    return np.concatenate(parts) if parts else np.zeros((0,))


def _pair_survival(box: BlackBoxMap, seed: int, n_max: int, radii: Sequence[float], closed: Sequence[bool]):
    """Chunk runner returning survivor counts of shape (radii, n_max + 1) per chunk."""

    def run(chunk: int, size: int) -> np.ndarray:
        rng = np.random.default_rng([seed, chunk])
        x = box.sample(rng, size)
        y = box.sample(rng, size)
        alive = np.ones((len(radii), size), dtype=bool)
        counts = np.zeros((len(radii), n_max + 1), dtype=np.int64)
        for step in range(n_max + 1):
            if step:
                x, y = box.iterate(x), box.iterate(y)
            d = box.metric(x, y)
            for r, (rad, cl) in enumerate(zip(radii, closed)):
                alive[r] &= (d <= rad) if cl else (d < rad)
            counts[:, step] = alive.sum(axis=1)
        return counts[None]

    return run


def _survivor_counts(box, seed, n_max, radii, closed, count, workers) -> np.ndarray:
    return _map_chunks(_pair_survival(box, seed, n_max, radii, closed), count, workers).sum(axis=0)


@dataclass
class BinomialEstimate:
    hits: int
    trials: int

    @property
    def fraction(self) -> float:
        return self.hits / self.trials if self.trials else 0.0

    @property
    def stderr(self) -> float:
        p = self.fraction
        return math.sqrt(p * (1 - p) / self.trials) if self.trials else 0.0

    @property
    def upper(self) -> float:
        """Upper 3-sigma bound; with zero hits the rule-of-three bound 3/N."""
        if self.hits == 0:
            return 3.0 / self.trials
        return self.fraction + 3.0 * self.stderr


@dataclass
class PairwiseEstimate:
    """Fraction of sampled pairs never separated by delta or more up to n_max."""

    delta: float
    n_max: int
    seed: int
    survivors: BinomialEstimate
    epsilon: float
    curve: List[int] = field(default_factory=list)

    @property
    def surviving_fraction(self) -> float:
        return self.survivors.fraction

    @property
    def stderr(self) -> float:
        return self.survivors.stderr

    @property
    def upper_bound(self) -> float:
        return self.survivors.upper

    @property
    def sensitive(self) -> bool:
        return self.upper_bound < self.epsilon

    @property
    def verdict(self) -> str:
        return "pairwise-sensitive-up-to-depth" if self.sensitive else "not-pairwise-sensitive"

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "n_max": self.n_max,
            "seed": self.seed,
            "pairs": self.survivors.trials,
            "survivors": self.survivors.hits,
            "surviving_fraction": self.surviving_fraction,
            "stderr": self.stderr,
            "upper_bound": self.upper_bound,
            "epsilon": self.epsilon,
            "verdict": self.verdict,
        }


def pairwise_sensitivity_estimate(
    system,
    delta,
    n_max: int = DEFAULT_MC_DEPTH,
    pair_count: int = 10_000,
    seed: int = 0,
    epsilon: float = DEFAULT_EPSILON,
    workers: int = 1,
) -> PairwiseEstimate:
    """Sample mu x mu pairs and count those that stay closer than delta for n <= n_max."""
    d = float(_check_delta(delta))
    if pair_count < 1:
        raise ValueError("pair_count must be positive")
    box = _black_box(system)
    counts = _survivor_counts(box, seed, n_max, [d], [False], pair_count, workers)[0]
    return PairwiseEstimate(
        d, n_max, seed, BinomialEstimate(int(counts[-1]), pair_count), epsilon, [int(c) for c in counts]
    )


@dataclass
class SandwichResult:
    """Estimates of mu2(pairs within delta), the mean ball mass, and mu2(pairs within 2 delta)."""

    delta: float
    n_max: int
    lower: float
    middle: float
    upper: float
    lower_se: float
    middle_se: float
    upper_se: float
    middle_route: str

    samples: int = 1

    def _tol(self, *ses: float) -> float:
        # a zero-hit binomial has stderr 0; floor it at 1/N so 3 sigma covers the rule of three
        floor = 1.0 / self.samples
        return 3 * math.hypot(*(max(se, floor) for se in ses))

    @property
    def first_holds(self) -> bool:
        return self.lower <= self.middle + self._tol(self.lower_se, self.middle_se)

    @property
    def second_holds(self) -> bool:
        return self.middle <= self.upper + self._tol(self.middle_se, self.upper_se)

    @property
    def holds(self) -> bool:
        return self.first_holds and self.second_holds

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "n_max": self.n_max,
            "estimates": [self.lower, self.middle, self.upper],
            "stderrs": [self.lower_se, self.middle_se, self.upper_se],
            "middle_route": self.middle_route,
            "samples": self.samples,
            "first_inequality": self.first_holds,
            "second_inequality": self.second_holds,
        }


def sandwich_check(
    system,
    delta,
    n_max: int = 40,
    samples: int = 10_000,
    seed: int = 0,
    ball_samples: int = 1000,
    workers: int = 1,
) -> SandwichResult:
    """Estimate the three members of the pair/ball sandwich.

    The outer terms come from sampled pairs with strict closeness (< delta,
    < 2 delta).  For exact engines the middle term averages exact
    dynamical-ball masses over sampled rational centers, so it is an
    independent route; a black box falls back to pairs with d <= delta.
    """
    delta_exact = _check_delta(delta)
    d = float(delta_exact)
    box = _black_box(system)
    if 2 * d >= 1:
        raise ValueError("2*delta must stay below 1")
    counts = _survivor_counts(box, seed, n_max, [d, d, 2 * d], [False, True, False], samples, workers)[:, -1]
    lo = BinomialEstimate(int(counts[0]), samples)
    hi = BinomialEstimate(int(counts[2]), samples)
    if isinstance(system, PiecewiseAffineCircleMap):
        rng = np.random.default_rng([seed, 2**32 - 1])
        nums = rng.integers(0, EXACT_SAMPLE_DENOMINATOR, size=ball_samples)
        exact = [
            dynamical_ball(system, ExactScalar.of(Fraction(int(k), EXACT_SAMPLE_DENOMINATOR)), delta_exact, n_max).mass
            for k in nums
        ]
        # average exactly so that equal masses give an exact mean and zero spread
        total = ZERO
        for m in exact:
            total = total + m
        mean = total / len(exact)
        spread = np.array([float(m - mean) for m in exact])
        mid = float(mean)
        mid_se = float(math.sqrt((spread ** 2).sum() / (len(exact) - 1)) / math.sqrt(len(exact))) if len(exact) > 1 else 0.0
        route = "exact-ball-average"
    else:
        m = BinomialEstimate(int(counts[1]), samples)
        mid, mid_se = m.fraction, m.stderr
        route = "closed-pair-sampling"
    return SandwichResult(d, n_max, lo.fraction, mid, hi.fraction, lo.stderr, mid_se, hi.stderr, route, samples)


def itinerary_mass_estimate(
    system: PiecewiseAffineCircleMap, P: Partition, x, n: int, samples: int = 100_000, seed=0
) -> BinomialEstimate:
    """Monte Carlo estimate of mu(P_n(x)) from binary64 orbits of uniform samples.

    ``seed`` may be an int or a tuple of ints naming an independent stream.
    """
    key = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    x = ExactScalar.of(x)
    target = []
    point = x
    for i in range(n + 1):
        target.append(P.label_at(point))
        if i < n:
            point = system(point)
    target = np.array(target)
    box = as_black_box(system)
    bps = np.array([float(p) for p in P.points.scalars()])
    labels = P.labels

    def run(chunk: int, size: int) -> np.ndarray:
        rng = np.random.default_rng(key + [chunk])
        y = box.sample(rng, size)
        ok = np.ones(size, dtype=bool)
        for i in range(n + 1):
            if i:
                y = box.iterate(y)
            ok &= labels[np.searchsorted(bps, y, side="right") - 1] == target[i]
        return ok

    hits = _map_chunks(run, samples, 1)
    return BinomialEstimate(int(hits.sum()), samples)
