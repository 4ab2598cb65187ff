"""Partitions, joins, pullbacks, iterated refinements and itinerary cells.

Two engines share one vocabulary:

* arc partitions of the circle, stored as sorted breakpoints
  ``0 = p_0 < p_1 < ... < p_k < 1`` plus a cell id per elementary interval
  ``[p_i, p_{i+1})``;
* cylinder partitions of a Bernoulli shift, stored as symbol patterns with
  wildcards.

Cells of arc partitions are numbered by their leftmost point, so two
partitions are equal exactly when their breakpoint and label arrays are.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import cmp_to_key
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import arcs as A
from ._points import Points, signs
from .arcs import ArcCell, ArcSet
from .exact import (
    ONE,
    ZERO,
    ExactScalar,
    ScalarLike,
    UnsupportedCombination,
    compare,
    reduce_mod_1,
)
from .systems import (
    BernoulliShift,
    BlackBoxMap,
    PiecewiseAffineCircleMap,
    ResourceLimitError,
    ShiftPoint,
)

log = logging.getLogger(__name__)

DEFAULT_CELL_CAP = 1_000_000
WILD = -1


def _canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Renumber labels 0, 1, 2, ... in order of first appearance."""
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inv.reshape(-1)]


class Partition:
    """Finite partition of the circle into unions of half-open arcs."""

    engine = "arc"

    def __init__(self, points: Points, labels: np.ndarray, provenance: str = "", dropped: int = 0):
        labels = np.asarray(labels, dtype=np.int64)
        if len(points) != len(labels) or len(points) == 0:
            raise ValueError("need one label per breakpoint and at least one breakpoint")
        keep = np.ones(len(labels), dtype=bool)
        keep[1:] = labels[1:] != labels[:-1]
        if not keep.all():
            points, labels = points.take(keep), labels[keep]
        self.points = points.reduced()
        self.labels = _canonical_labels(labels)
        self.n_cells = int(self.labels.max()) + 1
        self.provenance = provenance
        self.dropped = dropped
        self._cells: Optional[List[ArcCell]] = None
        self._measures = None

    # -- construction -------------------------------------------------------------------
    @classmethod
    def from_breakpoints(cls, breakpoints: Sequence[ScalarLike], provenance: str = "") -> "Partition":
        """Each gap between consecutive breakpoints becomes its own cell.

        0 is always a breakpoint; the last gap runs up to 1.
        """
        pts = {reduce_mod_1(ExactScalar.of(b)) for b in breakpoints} | {ZERO}
        ordered = sorted(pts, key=cmp_to_key(compare))
        points = Points.from_scalars(ordered)
        return cls(points, np.arange(len(ordered)), provenance or "breakpoints")

    @classmethod
    def from_cells(cls, cells: Sequence[Union[ArcCell, ArcSet]], provenance: str = "cells") -> "Partition":
        """Build from explicit arc cells, which must be disjoint and cover the circle."""
        sets = [A.as_arcset(c) for c in cells]
        sets = [s for s in sets if s]
        total = ZERO
        for s in sets:
            total = total + A.measure(s)
        if total != ONE or A.union(*sets) != A.FULL:
            raise ValueError(f"cells do not cover the circle exactly (total measure {total})")
        starts, labels = [], []
        for idx, s in enumerate(sets):
            for a, _ in s:
                starts.append(a)
                labels.append(idx)
        order = sorted(range(len(starts)), key=cmp_to_key(lambda i, j: compare(starts[i], starts[j])))
        points = Points.from_scalars([starts[i] for i in order])
        out = cls(points, np.array([labels[i] for i in order]), provenance)
        if sum(len(s) for s in sets) != len(points) or len(out) != len(sets):
            raise ValueError("cells overlap")
        return out

    # -- views --------------------------------------------------------------------------
    def __len__(self) -> int:
        return self.n_cells

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return self.points.equals(other.points) and np.array_equal(self.labels, other.labels)

    def __hash__(self):
        return hash((len(self.points), self.n_cells))

    def __repr__(self) -> str:
        return f"Partition({self.n_cells} cells, {len(self.points)} arcs, {self.provenance!r})"

    @property
    def alpha(self) -> Optional[str]:
        return self.points.alpha

    @property
    def cells(self) -> List[ArcCell]:
        if self._cells is None:
            pts = self.points.scalars() + [ONE]
            grouped: List[List[Tuple[ExactScalar, ExactScalar]]] = [[] for _ in range(self.n_cells)]
            for i, lab in enumerate(self.labels):
                grouped[lab].append((pts[i], pts[i + 1]))
            self._cells = [ArcCell(tuple(g), label=k) for k, g in enumerate(grouped)]
        return self._cells

    def cell(self, k: int) -> ArcCell:
        """Cell with label k, built without materializing the others."""
        if self._cells is not None:
            return self._cells[k]
        idx = np.flatnonzero(self.labels == k)
        arcs = []
        for i in idx:
            end = self.points.scalar(i + 1) if i + 1 < len(self.points) else ONE
            arcs.append((self.points.scalar(i), end))
        return ArcCell(tuple(arcs), label=k)

    def arc_sets(self) -> frozenset:
        return frozenset(c.arcs for c in self.cells)

    def _measure_numerators(self):
        if self._measures is None:
            dA, dB = self.points.lengths()
            dtype = object if dA.dtype == object else np.int64
            sA = np.zeros(self.n_cells, dtype=dtype)
            np.add.at(sA, self.labels, dA)
            sB = None
            if dB is not None:
                sB = np.zeros(self.n_cells, dtype=object if dB.dtype == object else np.int64)
                np.add.at(sB, self.labels, dB)
            self._measures = (sA, sB)
        return self._measures

    def _measure(self, k: int) -> ExactScalar:
        sA, sB = self._measure_numerators()
        D = self.points.D
        return ExactScalar(Fraction(int(sA[k]), D), Fraction(int(sB[k]) if sB is not None else 0, D), self.alpha)

    def measures(self) -> List[ExactScalar]:
        return [self._measure(k) for k in range(self.n_cells)]

    def cell_measures_float(self) -> np.ndarray:
        sA, sB = self._measure_numerators()
        if sB is None and sA.dtype != object and self.points.D < 2**53:
            return sA.astype(float) / self.points.D
        if sB is None:
            return np.array([float(m) for m in self.measures()])
        D = self.points.D
        a = np.array([int(v) / D for v in sA])
        b = np.array([int(v) / D for v in sB])
        approx = a + b * float(ExactScalar(Fraction(0), Fraction(1), self.alpha))
        # heavy cancellation: redo those cells with enclosures
        bad = np.flatnonzero(np.abs(approx) < 1e-8 * (np.abs(a) + np.abs(b)))
        for k in bad:
            approx[k] = float(self._measure(int(k)))
        return approx

    def max_cell_measure(self) -> ExactScalar:
        sA, sB = self._measure_numerators()
        D = self.points.D
        if sB is None:
            return ExactScalar(Fraction(int(sA.max()), D))
        approx = self.cell_measures_float()
        k = int(np.argmax(approx))
        # certify: sup - every other cell >= 0
        dA = sA[k] - sA
        dB = sB[k] - sB
        if np.all(signs(dA, dB, self.alpha) >= 0):
            return self._measure(k)
        return max(self.measures(), key=cmp_to_key(compare))

    def max_cell_diameter(self) -> ExactScalar:
        return max((A.circle_diameter(c.arcs) for c in self.cells), key=cmp_to_key(compare))

    def label_at(self, x: ScalarLike) -> int:
        idx = self.points.count_at_most(reduce_mod_1(ExactScalar.of(x))) - 1
        return int(self.labels[idx])

    def cell_containing(self, x: ScalarLike) -> ArcCell:
        return self.cell(self.label_at(x))

    def refines(self, coarser: "Partition") -> bool:
        """Every cell of self lies inside one cell of ``coarser`` (exact containment)."""
        joined = join(self, coarser)
        return len(joined) == len(self)

    def to_json(self) -> List[List[List[str]]]:
        return [c.to_json() for c in self.cells]


# -- shift engine -----------------------------------------------------------------------

@dataclass(frozen=True)
class CylinderCell:
    """Set of sequences matching ``pattern`` (``-1`` = any symbol)."""

    pattern: Tuple[int, ...]
    measure: Fraction
    label: int = 0

    def matches(self, word: Sequence[int]) -> bool:
        return all(s == WILD or s == w for s, w in zip(self.pattern, word))

    def __contains__(self, x: ShiftPoint) -> bool:
        return self.matches(x.word(len(self.pattern)))

    def to_json(self) -> str:
        return "".join("*" if s == WILD else str(s) for s in self.pattern)


def _strip(pattern: Sequence[int]) -> Tuple[int, ...]:
    p = list(pattern)
    while p and p[-1] == WILD:
        p.pop()
    return tuple(p)


def _meet(p: Tuple[int, ...], q: Tuple[int, ...]) -> Optional[Tuple[int, ...]]:
    n = max(len(p), len(q))
    out = []
    for i in range(n):
        a = p[i] if i < len(p) else WILD
        b = q[i] if i < len(q) else WILD
        if a == WILD:
            out.append(b)
        elif b == WILD or a == b:
            out.append(a)
        else:
            return None
    return _strip(out)


def pattern_measure(system: BernoulliShift, pattern: Sequence[int]) -> Fraction:
    counts = [0] * system.alphabet_size
    for s in pattern:
        if s != WILD:
            counts[s] += 1
    num, den = 1, 1
    for p, c in zip(system.probabilities, counts):
        if c:
            num *= p.numerator**c
            den *= p.denominator**c
    return Fraction(num, den)


class ShiftPartition:
    """Finite partition of a Bernoulli shift space into pattern cells."""

    engine = "shift"

    def __init__(self, system: BernoulliShift, patterns: Sequence[Sequence[int]], provenance: str = ""):
        pats = sorted({_strip(p) for p in patterns}, key=lambda p: tuple(s if s != WILD else 10**9 for s in p))
        self.system = system
        self.patterns: Tuple[Tuple[int, ...], ...] = tuple(pats)
        self.provenance = provenance
        self.dropped = 0
        self._cells: Optional[List[CylinderCell]] = None

    @classmethod
    def cylinders(cls, system: BernoulliShift, depth: int = 1) -> "ShiftPartition":
        words = itertools.product(range(system.alphabet_size), repeat=depth)
        return cls(system, list(words), provenance=f"cylinders({depth})")

    def __len__(self) -> int:
        return len(self.patterns)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ShiftPartition):
            return NotImplemented
        return self.patterns == other.patterns

    def __hash__(self):
        return hash(self.patterns)

    def __repr__(self) -> str:
        return f"ShiftPartition({len(self)} cells, {self.provenance!r})"

    @property
    def cells(self) -> List[CylinderCell]:
        if self._cells is None:
            self._cells = [
                CylinderCell(p, pattern_measure(self.system, p), k) for k, p in enumerate(self.patterns)
            ]
        return self._cells

    def measures(self) -> List[Fraction]:
        return [c.measure for c in self.cells]

    def cell_measures_float(self) -> np.ndarray:
        return np.array([float(m) for m in self.measures()])

    def max_cell_measure(self) -> Fraction:
        return max(self.measures())

    def max_cell_diameter(self):
        raise UnsupportedCombination("diameter is undefined for shift cells; use max_cell_measure")

    def depth(self) -> int:
        return max((len(p) for p in self.patterns), default=0)

    def label_at(self, x: ShiftPoint) -> int:
        word = x.word(self.depth())
        for k, p in enumerate(self.patterns):
            if all(s == WILD or s == w for s, w in zip(p, word)):
                return k
        raise ValueError("point matches no cell; the patterns do not form a partition")

    def cell(self, k: int) -> CylinderCell:
        return self.cells[k]

    def cell_containing(self, x: ShiftPoint) -> CylinderCell:
        return self.cells[self.label_at(x)]

    def to_json(self) -> List[str]:
        return [c.to_json() for c in self.cells]


AnyPartition = Union[Partition, ShiftPartition]


def binary_partition() -> Partition:
    return Partition.from_breakpoints([ZERO, ExactScalar.of(Fraction(1, 2))], provenance="binary")


# -- operations -----------------------------------------------------------------------

def join(P: AnyPartition, Q: AnyPartition) -> AnyPartition:
    """Common refinement: all nonempty intersections of a cell of P with a cell of Q."""
    if isinstance(P, Partition) and isinstance(Q, Partition):
        pts, inv = Points.concat([P.points, Q.points]).sort_unique()
        n = len(P.points)
        in_p = np.zeros(len(pts), dtype=bool)
        in_q = np.zeros(len(pts), dtype=bool)
        in_p[inv[:n]] = True
        in_q[inv[n:]] = True
        lp = P.labels[np.cumsum(in_p) - 1]
        lq = Q.labels[np.cumsum(in_q) - 1]
        return Partition(pts, lp * Q.n_cells + lq, provenance=f"join({P.provenance},{Q.provenance})")
    if isinstance(P, ShiftPartition) and isinstance(Q, ShiftPartition):
        if P.system is not Q.system and P.system.probabilities != Q.system.probabilities:
            raise UnsupportedCombination("partitions of different shift spaces")
        cells = []
        for p in P.patterns:
            for q in Q.patterns:
                m = _meet(p, q)
                if m is not None:
                    cells.append(m)
        return ShiftPartition(P.system, cells, provenance=f"join({P.provenance},{Q.provenance})")
    raise UnsupportedCombination(f"cannot join {type(P).__name__} with {type(Q).__name__}")


def pullback(system, P: AnyPartition) -> AnyPartition:
    """f^-1(P): the preimages of the cells of P, empty ones dropped."""
    if isinstance(system, BernoulliShift):
        if not isinstance(P, ShiftPartition):
            raise UnsupportedCombination("shift systems need a ShiftPartition")
        return ShiftPartition(P.system, [(WILD,) + p for p in P.patterns], provenance=f"pullback({P.provenance})")
    if isinstance(system, BlackBoxMap):
        raise UnsupportedCombination("pullbacks need an exact engine")
    if not isinstance(P, Partition):
        raise UnsupportedCombination("circle maps need an arc Partition")
    pieces: List[Points] = []
    labels: List[np.ndarray] = []
    for br in system.branches:
        start = Points.from_scalars([br.start], P.alpha or system.alpha)
        if br.slope == 0:
            pieces.append(start)
            labels.append(np.array([P.labels[P.points.count_at_most(reduce_mod_1(br.intercept)) - 1]]))
            continue
        t0, t1 = br.image(br.start), br.image(br.end)
        pieces.append(start)
        labels.append(np.array([P.labels[P.points.count_at_most(reduce_mod_1(t0)) - 1]]))
        for j in range(t0.floor(), -(-t1).floor()):
            shifted = P.points.affine(Fraction(1), ExactScalar.of(j))
            mask = (shifted.signs_against(t0) > 0) & (shifted.signs_against(t1) < 0)
            if not mask.any():
                continue
            inside = shifted.take(mask)
            pieces.append(inside.affine(1 / br.slope, -br.intercept / br.slope))
            labels.append(P.labels[mask])
    all_labels = np.concatenate(labels)
    dropped = P.n_cells - len(np.unique(all_labels))
    if dropped:
        log.warning("pullback through %s dropped %d empty preimage cell(s)", system.name, dropped)
    return Partition(Points.concat(pieces), all_labels, provenance=f"pullback({P.provenance})", dropped=dropped)


def refinements(system, P: AnyPartition, n: int, cell_cap: int = DEFAULT_CELL_CAP) -> Iterator[AnyPartition]:
    """Yield P_0, P_1, ..., P_n where P_k is the join of f^-i(P) for i <= k.

    Uses P_k = P v f^-1(P_{k-1}).  Raises ResourceLimitError (carrying the
    last partition that fit) once a refinement exceeds ``cell_cap`` cells.
    """
    if n < 0:
        raise ValueError("depth must be nonnegative")
    current = P
    if len(current) > cell_cap:
        raise ResourceLimitError(f"P_0 already has {len(current)} cells", reached=-1, partial=None)
    yield current
    for k in range(1, n + 1):
        nxt = join(P, pullback(system, current))
        if len(nxt) > cell_cap:
            raise ResourceLimitError(
                f"P_{k} has {len(nxt)} cells, over the cap of {cell_cap}", reached=k - 1, partial=current
            )
        nxt.provenance = f"P_{k}({P.provenance})"
        current = nxt
        yield current


def iterated_join(system, P: AnyPartition, n: int, cell_cap: int = DEFAULT_CELL_CAP) -> AnyPartition:
    """P_n, the join of f^-k(P) for k = 0..n."""
    last = P
    for last in refinements(system, P, n, cell_cap):
        pass
    return last


@dataclass(frozen=True)
class ItineraryCell:
    """P_n(x): the points whose first n+1 P-symbols agree with those of x."""

    point: object
    depth: int
    cell: Union[ArcCell, CylinderCell]

    @property
    def measure(self):
        return self.cell.measure


def itinerary_cell(system, P: AnyPartition, x, n: int) -> ItineraryCell:
    """Intersection of f^-i(P(f^i x)) over i = 0..n, computed from the definition."""
    if n < 0:
        raise ValueError("depth must be nonnegative")
    if isinstance(system, BernoulliShift):
        if not isinstance(P, ShiftPartition):
            raise UnsupportedCombination("shift systems need a ShiftPartition")
        width = P.depth()
        word = x.word(n + width)
        slots = [WILD] * (n + width)
        for i in range(n + 1):
            window = word[i : i + width]
            cell = next(p for p in P.patterns if all(s == WILD or s == w for s, w in zip(p, window)))
            for j, s in enumerate(cell):
                if s != WILD:
                    slots[i + j] = s
        pattern = _strip(slots)
        return ItineraryCell(x, n, CylinderCell(pattern, pattern_measure(system, pattern)))
    if not isinstance(system, PiecewiseAffineCircleMap) or not isinstance(P, Partition):
        raise UnsupportedCombination("itinerary cells need an exact engine and a matching partition")
    x = ExactScalar.of(x)
    orbit = [x]
    for _ in range(n):
        orbit.append(system(orbit[-1]))
    current = P.cell_containing(orbit[n]).arcs
    for i in range(n - 1, -1, -1):
        current = A.intersect(P.cell_containing(orbit[i]).arcs, system.preimage(current))
    return ItineraryCell(x, n, ArcCell(current))


def max_cell_measure(P: AnyPartition):
    return P.max_cell_measure()


def max_cell_diameter(P: AnyPartition):
    return P.max_cell_diameter()


@dataclass(frozen=True)
class InvarianceResult:
    """Outcome of the A subset f^-1(A) (mod 0) test; ``excess`` = mu(A minus f^-1 A)."""

    invariant_mod_0: bool
    excess: ExactScalar

    @property
    def status(self) -> str:
        return "invariant_mod_0" if self.invariant_mod_0 else "not_invariant"


def _arcset_of(A_: Union[ArcCell, ArcSet, Sequence]) -> ArcSet:
    return A.as_arcset(A_)


def positively_invariant_check(system: PiecewiseAffineCircleMap, cell) -> InvarianceResult:
    a = _arcset_of(cell)
    excess = A.measure(A.difference(a, system.preimage(a)))
    return InvarianceResult(excess == ZERO, excess)


def invariant_intersection_measure(
    system: PiecewiseAffineCircleMap, cell, N: int, cell_cap: int = DEFAULT_CELL_CAP
) -> List[ExactScalar]:
    """mu of the intersection of f^-n(A) over n <= m, for m = 0..N."""
    a = _arcset_of(cell)
    current = a
    out = [A.measure(current)]
    for m in range(1, N + 1):
        current = A.intersect(a, system.preimage(current))
        if len(current) > cell_cap:
            raise ResourceLimitError(f"intersection at depth {m} has {len(current)} arcs", reached=m - 1,
                                     partial=out)
        out.append(A.measure(current))
    return out
