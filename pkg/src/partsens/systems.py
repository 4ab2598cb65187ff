"""Concrete dynamical systems: exact piecewise-affine circle maps, one-sided
Bernoulli shifts, and a binary64 black-box engine for Monte Carlo work."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cmp_to_key, lru_cache
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import arcs as A
from .arcs import ArcCell, ArcSet
from .exact import (
    ONE,
    ZERO,
    ExactScalar,
    ScalarLike,
    compare,
    parse_rational,
    reduce_mod_1,
)

log = logging.getLogger(__name__)

DEFAULT_BRANCH_CAP = 1_000_000


class ResourceLimitError(RuntimeError):
    """A configured size cap (cells, branches) was exceeded."""

    def __init__(self, message: str, reached: Optional[int] = None, partial=None):
        super().__init__(message)
        self.reached = reached
        self.partial = partial


class InternalConsistencyError(RuntimeError):
    pass


@dataclass(frozen=True)
class Branch:
    """x -> slope*x + intercept (mod 1) on the half-open domain [start, end)."""

    start: ExactScalar
    end: ExactScalar
    slope: Fraction
    intercept: ExactScalar

    def image(self, x: ExactScalar) -> ExactScalar:
        return self.intercept + x * self.slope


class PiecewiseAffineCircleMap:
    """Exact circle map given by finitely many affine branches with rational slopes.

    Branch domains must tile [0, 1) in order.  When ``measure_preserving`` is
    set, Lebesgue invariance is checked exactly against a family of probe arcs.
    """

    def __init__(
        self,
        branches: Sequence[Branch],
        name: str = "map",
        measure_preserving: bool = False,
        params: Optional[dict] = None,
    ):
        if not branches:
            raise ValueError("a circle map needs at least one branch")
        branches = tuple(branches)
        if branches[0].start != ZERO or branches[-1].end != ONE:
            raise ValueError("branch domains must start at 0 and end at 1")
        for b in branches:
            if compare(b.start, b.end) >= 0:
                raise ValueError(f"empty branch domain [{b.start}, {b.end})")
            if b.slope < 0:
                raise ValueError("negative slopes are not supported (half-open arcs would flip)")
        for left, right in zip(branches, branches[1:]):
            if left.end != right.start:
                raise ValueError("branch domains must be contiguous and disjoint")
        alphas = {s.alpha for b in branches for s in (b.start, b.end, b.intercept)} - {None}
        if len(alphas) > 1:
            raise ValueError(f"a map may involve only one irrational constant, got {sorted(alphas)}")
        self.branches: Tuple[Branch, ...] = branches
        self.name = name
        self.alpha: Optional[str] = alphas.pop() if alphas else None
        self.measure_preserving = measure_preserving
        self.params = dict(params or {})
        if measure_preserving:
            self._verify_invariance()

    def __repr__(self) -> str:
        return f"PiecewiseAffineCircleMap({self.name!r}, {len(self.branches)} branches)"

    def _verify_invariance(self) -> None:
        probes = [A.arc(Fraction(k, 8), Fraction(k + 1, 8)) for k in range(8)]
        probes += [A.arc(0, Fraction(1, 3)), A.arc(Fraction(1, 3), 1), A.arc(Fraction(1, 5), Fraction(7, 10))]
        for probe in probes:
            pre = self.preimage(probe)
            if A.measure(pre) != A.measure(probe):
                raise ValueError(
                    f"{self.name}: declared measure-preserving but |f^-1 I| = {A.measure(pre)} "
                    f"for I = {probe}"
                )

    def branch_index(self, x: ExactScalar) -> int:
        lo, hi = 0, len(self.branches)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if compare(self.branches[mid].start, x) <= 0:
                lo = mid
            else:
                hi = mid
        b = self.branches[lo]
        if not (compare(b.start, x) <= 0 and compare(x, b.end) < 0):
            raise InternalConsistencyError(f"{x} lies in no branch domain of {self.name}")
        return lo

    def __call__(self, x: ScalarLike) -> ExactScalar:
        x = ExactScalar.of(x)
        if compare(x, ZERO) < 0 or compare(x, ONE) >= 0:
            raise ValueError(f"point {x} is outside [0, 1)")
        return reduce_mod_1(self.branches[self.branch_index(x)].image(x))

    def preimage(self, arcs: ArcSet) -> ArcSet:
        """Exact f^-1 of a finite arc union."""
        pieces: List[Tuple[ExactScalar, ExactScalar]] = []
        for br in self.branches:
            if br.slope == 0:
                if A.contains(arcs, br.intercept):
                    pieces.append((br.start, br.end))
                continue
            t0 = br.image(br.start)
            t1 = br.image(br.end)
            for j in range(t0.floor(), -(-t1).floor()):
                for a, b in arcs:
                    lo, hi = a + j, b + j
                    if compare(lo, t0) < 0:
                        lo = t0
                    if compare(hi, t1) > 0:
                        hi = t1
                    if compare(lo, hi) < 0:
                        pieces.append(((lo - br.intercept) / br.slope, (hi - br.intercept) / br.slope))
        return A.normalize(pieces)

    def simplified(self) -> "PiecewiseAffineCircleMap":
        """Merge neighbouring branches that define the same map mod 1."""
        merged: List[Branch] = []
        for br in self.branches:
            if merged:
                prev = merged[-1]
                same_slope = prev.slope == br.slope
                shift = br.intercept - prev.intercept
                if same_slope and shift.is_rational and shift.q0.denominator == 1:
                    merged[-1] = Branch(prev.start, br.end, prev.slope, prev.intercept)
                    continue
            merged.append(br)
        return PiecewiseAffineCircleMap(merged, name=self.name, params=self.params)


@dataclass(frozen=True)
class ShiftPoint:
    """A point of the one-sided shift space, revealed lazily.

    Symbols either come from an explicit finite ``prefix`` or from a seeded
    stream; the symbol at absolute index i depends only on (seed, i), so a
    shifted copy reads the same stream from a later cursor.
    """

    probabilities: Tuple[Fraction, ...]
    seed: Optional[int] = None
    offset: int = 0
    prefix: Tuple[int, ...] = ()

    BLOCK = 4096

    @classmethod
    def from_symbols(cls, symbols: Sequence[int], probabilities: Sequence[Fraction] = ()) -> "ShiftPoint":
        return cls(tuple(Fraction(p) for p in probabilities), None, 0, tuple(int(s) for s in symbols))

    def symbol(self, i: int) -> int:
        if self.seed is None:
            if self.offset + i >= len(self.prefix):
                raise IndexError(f"explicit point reveals only {len(self.prefix) - self.offset} symbols")
            return self.prefix[self.offset + i]
        idx = self.offset + i
        block = _symbol_block(self.seed, idx // self.BLOCK, self.probabilities)
        return int(block[idx % self.BLOCK])

    def word(self, length: int) -> Tuple[int, ...]:
        if self.seed is None:
            end = self.offset + length
            if end > len(self.prefix):
                raise IndexError(f"explicit point reveals only {len(self.prefix) - self.offset} symbols")
            return self.prefix[self.offset : end]
        out: List[int] = []
        idx, end = self.offset, self.offset + length
        while idx < end:
            b = idx // self.BLOCK
            block = _symbol_block(self.seed, b, self.probabilities)
            stop = min(end, (b + 1) * self.BLOCK)
            out.extend(int(s) for s in block[idx - b * self.BLOCK : stop - b * self.BLOCK])
            idx = stop
        return tuple(out)

    def shifted(self, steps: int = 1) -> "ShiftPoint":
        return ShiftPoint(self.probabilities, self.seed, self.offset + steps, self.prefix)


@lru_cache(maxsize=256)
def _symbol_block(seed: int, block: int, probabilities: Tuple[Fraction, ...]) -> np.ndarray:
    rng = np.random.default_rng([seed, block])
    cdf = np.cumsum([float(p) for p in probabilities])
    u = rng.random(ShiftPoint.BLOCK)
    out = np.searchsorted(cdf, u, side="right")
    out.setflags(write=False)
    return np.minimum(out, len(probabilities) - 1)


class BernoulliShift:
    """One-sided Bernoulli shift on m symbols with rational weights."""

    def __init__(self, probabilities: Sequence[Union[str, Fraction, int]], name: Optional[str] = None):
        p = tuple(parse_rational(x) if isinstance(x, str) else Fraction(x) for x in probabilities)
        if len(p) < 2:
            raise ValueError("alphabet size must be at least 2")
        if any(x <= 0 for x in p):
            raise ValueError("probabilities must be positive")
        if sum(p) != 1:
            raise ValueError(f"probabilities sum to {sum(p)}, not 1")
        self.probabilities = p
        self.name = name or "bernoulli(" + ",".join(str(x) for x in p) + ")"
        self.measure_preserving = True

    @property
    def alphabet_size(self) -> int:
        return len(self.probabilities)

    def __repr__(self) -> str:
        return f"BernoulliShift({self.name!r})"

    def __call__(self, x: ShiftPoint) -> ShiftPoint:
        return x.shifted(1)

    def point(self, seed: int) -> ShiftPoint:
        return ShiftPoint(self.probabilities, int(seed))

    def point_from_symbols(self, symbols: Sequence[int]) -> ShiftPoint:
        return ShiftPoint.from_symbols(symbols, self.probabilities)

    def word_measure(self, word: Sequence[Optional[int]]) -> Fraction:
        out = Fraction(1)
        for s in word:
            if s is not None and s >= 0:
                out *= self.probabilities[s]
        return out

    def entropy(self) -> float:
        return -math.fsum(float(p) * math.log(p.numerator / p.denominator) for p in self.probabilities)


@dataclass(frozen=True)
class BlackBoxMap:
    """A map known only through binary64 evaluation and a seeded sampler of mu."""

    iterate: Callable[[np.ndarray], np.ndarray]
    sample: Callable[[np.random.Generator, int], np.ndarray]
    metric: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "black-box"


def circle_metric(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = np.abs(x - y) % 1.0
    return np.minimum(d, 1.0 - d)


def _uniform(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.random(size)


def as_black_box(system: PiecewiseAffineCircleMap) -> BlackBoxMap:
    """binary64 twin of an exact circle map (Lebesgue sampler, circle metric)."""
    starts = np.array([float(b.start) for b in system.branches])
    slopes = np.array([float(b.slope) for b in system.branches])
    icpts = np.array([float(b.intercept) for b in system.branches])

    def iterate(x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(starts, x, side="right") - 1
        y = slopes[idx] * x + icpts[idx]
        return y - np.floor(y)

    return BlackBoxMap(iterate, _uniform, circle_metric, name=system.name)


# -- catalog ------------------------------------------------------------------------------

def _scalar(value: ScalarLike) -> ExactScalar:
    return ExactScalar.of(value)


def rotation(alpha: ScalarLike) -> PiecewiseAffineCircleMap:
    """x -> x + alpha (mod 1); alpha is a rational string or a registered constant name."""
    a = reduce_mod_1(_scalar(alpha))
    if a == ZERO:
        return identity()
    cut = ONE - a
    branches = [Branch(ZERO, cut, Fraction(1), a), Branch(cut, ONE, Fraction(1), a - 1)]
    return PiecewiseAffineCircleMap(branches, name=f"rotation({a})", measure_preserving=True,
                                    params={"type": "rotation", "alpha": str(a)})


def expanding(m: int) -> PiecewiseAffineCircleMap:
    """x -> m*x (mod 1) with one branch per preimage sheet."""
    if m < 2:
        raise ValueError("expanding factor must be at least 2")
    branches = [
        Branch(_scalar(Fraction(k, m)), _scalar(Fraction(k + 1, m)), Fraction(m), _scalar(-k))
        for k in range(m)
    ]
    name = "doubling" if m == 2 else f"expanding({m})"
    return PiecewiseAffineCircleMap(branches, name=name, measure_preserving=True,
                                    params={"type": "expanding", "m": m})


def doubling() -> PiecewiseAffineCircleMap:
    return expanding(2)


def identity() -> PiecewiseAffineCircleMap:
    return PiecewiseAffineCircleMap([Branch(ZERO, ONE, Fraction(1), ZERO)], name="identity",
                                    measure_preserving=True, params={"type": "identity"})


def constant(c: ScalarLike) -> PiecewiseAffineCircleMap:
    c = reduce_mod_1(_scalar(c))
    return PiecewiseAffineCircleMap([Branch(ZERO, ONE, Fraction(0), c)], name=f"constant({c})",
                                    params={"type": "constant", "c": str(c)})


def interval_exchange(a: ScalarLike) -> PiecewiseAffineCircleMap:
    """Swap [0, a) and [a, 1): x -> x + 1 - a on the first piece, x - a on the second."""
    a = _scalar(a)
    if compare(a, ZERO) <= 0 or compare(a, ONE) >= 0:
        raise ValueError("exchange point must lie strictly inside (0, 1)")
    branches = [Branch(ZERO, a, Fraction(1), ONE - a), Branch(a, ONE, Fraction(1), -a)]
    return PiecewiseAffineCircleMap(branches, name=f"exchange({a})", measure_preserving=True,
                                    params={"type": "interval_exchange", "a": str(a)})


# -- operations ---------------------------------------------------------------------------

System = Union[PiecewiseAffineCircleMap, BernoulliShift, BlackBoxMap]


def evaluate(system: System, x):
    """Apply the map once."""
    if isinstance(system, BlackBoxMap):
        return system.iterate(np.asarray(x, dtype=float))
    return system(x)


def preimage_arc(system: PiecewiseAffineCircleMap, start: ScalarLike, end: ScalarLike) -> ArcCell:
    """f^-1 of the half-open arc from ``start`` to ``end`` (wrapping allowed)."""
    return ArcCell(system.preimage(A.arc(start, end)))


def compose_power(
    system: PiecewiseAffineCircleMap, k: int, branch_cap: int = DEFAULT_BRANCH_CAP
) -> PiecewiseAffineCircleMap:
    """f^k as a piecewise-affine map; one branch per realisable branch word."""
    if k < 1:
        raise ValueError("power must be at least 1")
    current = list(system.branches)
    for _ in range(k - 1):
        nxt: List[Branch] = []
        for inner in current:
            nxt.extend(_compose_branch(system, inner))
            if len(nxt) > branch_cap:
                raise ResourceLimitError(f"f^{k} needs more than {branch_cap} branches")
        current = nxt
    mp = system.measure_preserving
    out = PiecewiseAffineCircleMap(current, name=f"{system.name}^{k}", params=dict(system.params, power=k))
    out.measure_preserving = mp
    return out


def _compose_branch(outer: PiecewiseAffineCircleMap, inner: Branch) -> List[Branch]:
    """Split an inner branch where its image crosses outer branch boundaries."""
    if inner.slope == 0:
        t = reduce_mod_1(inner.intercept)
        g = outer.branches[outer.branch_index(t)]
        return [Branch(inner.start, inner.end, Fraction(0), g.image(t))]
    t0, t1 = inner.image(inner.start), inner.image(inner.end)
    cuts = []
    for j in range(t0.floor(), -(-t1).floor()):
        for g in outer.branches:
            t = g.start + j
            if compare(t0, t) < 0 and compare(t, t1) < 0:
                cuts.append(t)
    cuts.sort(key=cmp_to_key(compare))
    bounds = [t0] + cuts + [t1]
    out = []
    for lo, hi in zip(bounds, bounds[1:]):
        j = lo.floor()
        g = outer.branches[outer.branch_index(lo - j)]
        x_lo = (lo - inner.intercept) / inner.slope
        x_hi = (hi - inner.intercept) / inner.slope
        # g(t - j) = g.slope*(inner.slope*x + inner.intercept - j) + g.intercept
        intercept = g.intercept + (inner.intercept - j) * g.slope
        out.append(Branch(x_lo, x_hi, g.slope * inner.slope, intercept))
    return out


def iterate(system: System, x, n: int):
    for _ in range(n):
        x = evaluate(system, x)
    return x

