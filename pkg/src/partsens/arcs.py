"""Finite unions of half-open arcs of the circle [0, 1).

An arc set is a tuple of ``(a, b)`` pairs of ExactScalars, sorted, pairwise
disjoint, non-adjacent, with ``0 <= a < b <= 1``.  Arcs are never stored
wrapping: ``[x, 1)`` and ``[0, y)`` stay as two pieces, which keeps the form
canonical.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cmp_to_key
from typing import Iterable, List, Sequence, Tuple

from .exact import ONE, ZERO, ExactScalar, ScalarLike, compare, reduce_mod_1

Arc = Tuple[ExactScalar, ExactScalar]
ArcSet = Tuple[Arc, ...]

EMPTY: ArcSet = ()
FULL: ArcSet = ((ZERO, ONE),)


def _start_key(arc: Arc):
    return arc[0]


def normalize(arcs: Iterable[Arc]) -> ArcSet:
    """Sort, drop empty arcs and coalesce overlapping or adjacent ones."""
    items = [(a, b) for a, b in arcs if compare(a, b) < 0]
    if not items:
        return EMPTY
    items.sort(key=cmp_to_key(lambda s, t: compare(s[0], t[0])))
    out: List[Arc] = [items[0]]
    for a, b in items[1:]:
        la, lb = out[-1]
        if compare(a, lb) <= 0:
            if compare(b, lb) > 0:
                out[-1] = (la, b)
        else:
            out.append((a, b))
    return tuple(out)


def arc(start: ScalarLike, end: ScalarLike) -> ArcSet:
    """The circle arc running counterclockwise from ``start`` to ``end``.

    ``end`` is taken literally when ``start <= end <= start + 1``; otherwise
    both endpoints are reduced mod 1 and the arc wraps through 0 if needed.
    """
    start, end = ExactScalar.of(start), ExactScalar.of(end)
    length = end - start
    if length.sign() <= 0:
        return EMPTY
    if compare(length, ONE) >= 0:
        return FULL
    return arc_from_length(start, length)


def arc_from_length(start: ScalarLike, length: ScalarLike) -> ArcSet:
    start, length = reduce_mod_1(start), ExactScalar.of(length)
    if length.sign() <= 0:
        return EMPTY
    if compare(length, ONE) >= 0:
        return FULL
    end = start + length
    if compare(end, ONE) <= 0:
        return ((start, end),)
    return normalize([(ZERO, end - 1), (start, ONE)])


def measure(arcs: ArcSet) -> ExactScalar:
    total = ZERO
    for a, b in arcs:
        total = total + (b - a)
    return total


def intersect(x: ArcSet, y: ArcSet) -> ArcSet:
    out: List[Arc] = []
    i = j = 0
    while i < len(x) and j < len(y):
        a = x[i][0] if compare(x[i][0], y[j][0]) >= 0 else y[j][0]
        b = x[i][1] if compare(x[i][1], y[j][1]) <= 0 else y[j][1]
        if compare(a, b) < 0:
            out.append((a, b))
        if compare(x[i][1], y[j][1]) < 0:
            i += 1
        else:
            j += 1
    return normalize(out)


def union(*sets: ArcSet) -> ArcSet:
    return normalize(a for s in sets for a in s)


def complement(x: ArcSet) -> ArcSet:
    out: List[Arc] = []
    cursor = ZERO
    for a, b in x:
        if compare(cursor, a) < 0:
            out.append((cursor, a))
        cursor = b
    if compare(cursor, ONE) < 0:
        out.append((cursor, ONE))
    return tuple(out)


def difference(x: ArcSet, y: ArcSet) -> ArcSet:
    return intersect(x, complement(y))


def contains(x: ArcSet, point: ScalarLike) -> bool:
    p = reduce_mod_1(point)
    for a, b in x:
        if compare(a, p) <= 0 and compare(p, b) < 0:
            return True
    return False


def is_subset(x: ArcSet, y: ArcSet) -> bool:
    return difference(x, y) == EMPTY


def enclosing_arc_length(x: ArcSet) -> ExactScalar:
    """Length of the smallest circle arc containing ``x`` (closure-wise)."""
    if not x:
        return ZERO
    gaps = [x[k + 1][0] - x[k][1] for k in range(len(x) - 1)]
    gaps.append(ONE - x[-1][1] + x[0][0])
    widest = max(gaps, key=cmp_to_key(compare))
    return ONE - widest


def circle_diameter(x: ArcSet) -> ExactScalar:
    """Circle-metric diameter of the smallest arc enclosing ``x``."""
    length = enclosing_arc_length(x)
    half = ExactScalar.of(1) / 2
    return length if compare(length, half) <= 0 else half


@dataclass(frozen=True)
class ArcCell:
    """A partition member on the circle: a finite union of half-open arcs."""

    arcs: ArcSet
    label: int = 0

    @property
    def measure(self) -> ExactScalar:
        return measure(self.arcs)

    @property
    def is_empty(self) -> bool:
        return not self.arcs

    def __contains__(self, point: ScalarLike) -> bool:
        return contains(self.arcs, point)

    def to_json(self) -> List[List[str]]:
        return [[str(a), str(b)] for a, b in self.arcs]


def as_arcset(value: "ArcCell | Sequence[Arc]") -> ArcSet:
    if isinstance(value, ArcCell):
        return value.arcs
    return normalize(value)
