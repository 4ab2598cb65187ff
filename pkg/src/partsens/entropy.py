"""Partition entropy, entropy-rate series and Shannon-McMillan-Breiman local rates.

Measures stay exact; logarithms are taken in binary64.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Union

import numpy as np

from .exact import ExactScalar
from .partitions import DEFAULT_CELL_CAP, AnyPartition, itinerary_cell, refinements
from .systems import ResourceLimitError

LOG_BASES = {"e": math.e, "2": 2.0}


class DegenerateCellError(ValueError):
    pass


def _base_divisor(log_base: Union[str, float]) -> float:
    key = str(log_base)
    if key in ("e", "nat", "nats"):
        return 1.0
    if key in ("2", "2.0", "bits"):
        return math.log(2.0)
    raise ValueError(f"log base must be 'e' or '2', got {log_base!r}")


def exact_log(value: Union[Fraction, ExactScalar, float]) -> float:
    """Natural log of a positive exact value, safe for tiny rationals."""
    if isinstance(value, ExactScalar):
        if value.is_rational:
            value = value.q0
        else:
            return math.log(float(value))
    if isinstance(value, Fraction):
        if value <= 0:
            raise ValueError("log of a nonpositive value")
        return math.log(value.numerator) - math.log(value.denominator)
    return math.log(value)


def partition_entropy(P: AnyPartition, log_base: str = "e") -> float:
    """H(P) = -sum mu log mu over cells, with 0 log 0 = 0."""
    terms = []
    for m in P.measures():
        f = float(m)
        if f > 0:
            terms.append(-f * exact_log(m))
    return math.fsum(terms) / _base_divisor(log_base)


@dataclass
class EntropySeries:
    """H(P_{n-1}) and H(P_{n-1})/n for n = 1..len."""

    depths: List[int]
    entropies: List[float]
    log_base: str
    provenance: str
    cell_counts: List[int] = field(default_factory=list)
    truncated: Optional[str] = None

    @property
    def rates(self) -> List[float]:
        return [h / n for n, h in zip(self.depths, self.entropies)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "H", "H_over_n"])
        for n, h, r in zip(self.depths, self.entropies, self.rates):
            w.writerow([n, repr(h), repr(r)])
        return buf.getvalue()


def entropy_rate_series(
    system, P: AnyPartition, n_max: int, log_base: str = "e", cell_cap: int = DEFAULT_CELL_CAP
) -> EntropySeries:
    """H(P_{n-1})/n for n = 1..n_max; a cap overrun truncates the series instead of raising."""
    series = EntropySeries([], [], str(log_base), getattr(P, "provenance", ""))
    try:
        for k, Pk in enumerate(refinements(system, P, n_max - 1, cell_cap)):
            series.depths.append(k + 1)
            series.entropies.append(partition_entropy(Pk, log_base))
            series.cell_counts.append(len(Pk))
    except ResourceLimitError as exc:
        series.truncated = str(exc)
    return series


def smb_local_rate(system, P: AnyPartition, x, n: int, log_base: str = "e") -> float:
    """-(1/n) log mu(P_n(x))."""
    if n < 1:
        raise ValueError("n must be positive")
    cell = itinerary_cell(system, P, x, n)
    m = cell.measure
    if (m.sign() if isinstance(m, ExactScalar) else (m > 0) - (m < 0)) <= 0:
        raise DegenerateCellError(f"P_{n}(x) has zero measure at x = {x}")
    return -exact_log(m) / n / _base_divisor(log_base)


def smb_rates(system, P: AnyPartition, points: Sequence, n: int, log_base: str = "e") -> np.ndarray:
    """Local rates at several base points (each independent of the others)."""
    return np.array([smb_local_rate(system, P, x, n, log_base) for x in points])
