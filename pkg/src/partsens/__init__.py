"""Executable partition refinements, entropy rates and sensitivity verdicts for
piecewise-affine circle maps and Bernoulli shifts."""

__version__ = "0.1.0"

from .exact import ExactScalar, compare, parse_rational, parse_scalar
from .partitions import Partition, ShiftPartition, binary_partition, iterated_join, itinerary_cell, join, pullback
from .systems import BernoulliShift, PiecewiseAffineCircleMap, ResourceLimitError, compose_power
from . import systems, partitions, entropy, sensitivity, aperiodicity

__all__ = [
    "ExactScalar",
    "compare",
    "parse_rational",
    "parse_scalar",
    "Partition",
    "ShiftPartition",
    "binary_partition",
    "iterated_join",
    "itinerary_cell",
    "join",
    "pullback",
    "BernoulliShift",
    "PiecewiseAffineCircleMap",
    "ResourceLimitError",
    "compose_power",
    "systems",
    "partitions",
    "entropy",
    "sensitivity",
    "aperiodicity",
]
