"""Exact scalars of the form q0 + q1*alpha for a single registered irrational alpha.

Every breakpoint produced by pulling arcs back through rotations and rational
affine maps stays in this form, so partition refinement never has to trust a
floating-point comparison.  Ordering is certified: a cheap binary64 filter
decides most signs, and the remaining ones are settled with nested rational
enclosures of alpha.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, Optional, Tuple, Union

DEFAULT_PRECISION_CAP = 4096
_START_PRECISION = 64

Rational = Union[int, Fraction]


class ExactArithmeticError(Exception):
    """Base class for exact-numerics failures."""


class UnsupportedCombination(ExactArithmeticError):
    """Raised when two values built on different irrational constants meet."""


class PrecisionExhausted(ExactArithmeticError):
    """Raised when the enclosure precision cap is reached before a sign is certain."""


@dataclass(frozen=True)
class IrrationalConstant:
    """A named constant with certified rational enclosures.

    ``enclosure(p)`` returns ``(lo, hi)`` with ``hi - lo <= 2**-p`` and
    ``lo <= alpha <= hi``.
    """

    name: str
    enclosure_fn: Callable[[int], Tuple[Fraction, Fraction]] = field(repr=False, compare=False)
    irrational: bool = True

    def enclosure(self, precision: int) -> Tuple[Fraction, Fraction]:
        return _cached_enclosure(self.name, precision)

    @property
    def approx(self) -> float:
        return _cached_approx(self.name)


_REGISTRY: Dict[str, IrrationalConstant] = {}


@lru_cache(maxsize=4096)
def _cached_enclosure(name: str, precision: int) -> Tuple[Fraction, Fraction]:
    lo, hi = _REGISTRY[name].enclosure_fn(precision)
    if hi - lo > Fraction(1, 2**precision):
        raise ExactArithmeticError(f"enclosure of {name} at precision {precision} is too wide")
    return lo, hi


@lru_cache(maxsize=None)
def _cached_approx(name: str) -> float:
    lo, hi = _cached_enclosure(name, _START_PRECISION)
    return float((lo + hi) / 2)


def quadratic_constant(name: str, a: Rational, b: Rational, d: int, c: Rational = 1) -> IrrationalConstant:
    """Constant (a + b*sqrt(d)) / c, enclosed through integer square roots."""
    a, b, c = Fraction(a), Fraction(b), Fraction(c)
    if d < 0 or b == 0 or c == 0:
        raise ValueError("need d >= 0, b != 0, c != 0")
    scale = abs(b / c)
    extra = max(0, math.ceil(math.log2(scale)) + 1) if scale > 1 else 0

    def enclose(precision: int) -> Tuple[Fraction, Fraction]:
        bits = precision + extra + 1
        s = math.isqrt(d << (2 * bits))
        lo_root, hi_root = Fraction(s, 2**bits), Fraction(s + 1, 2**bits)
        ends = sorted(((a + b * lo_root) / c, (a + b * hi_root) / c))
        return ends[0], ends[1]

    is_square = math.isqrt(d) ** 2 == d
    return IrrationalConstant(name, enclose, irrational=not is_square)


def register_constant(constant: IrrationalConstant) -> IrrationalConstant:
    if not constant.irrational:
        raise ValueError(f"{constant.name} is not declared irrational")
    _REGISTRY[constant.name] = constant
    _cached_enclosure.cache_clear()
    _cached_approx.cache_clear()
    return constant


def get_constant(name: str) -> IrrationalConstant:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown irrational constant {name!r}; registered: {sorted(_REGISTRY)}") from None


def registered_constants() -> Tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


register_constant(quadratic_constant("golden_conjugate", -1, 1, 5, 2))
register_constant(quadratic_constant("sqrt2_minus_1", -1, 1, 2))


def _sign_of(r0: Fraction, r1: Fraction, alpha: Optional[str], cap: Optional[int] = None) -> int:
    """Certified sign of r0 + r1*alpha."""
    if r1 == 0:
        return (r0 > 0) - (r0 < 0)
    if alpha is None:
        raise ExactArithmeticError("irrational coefficient without a constant")
    const = get_constant(alpha)
    # binary64 filter; the bound covers conversion and rounding of both terms
    try:
        f0, f1 = float(r0), float(r1)
        approx = f0 + f1 * const.approx
        bound = (abs(f0) + 2.0 * abs(f1) * (abs(const.approx) + 1.0) + abs(approx)) * 2.0**-48
        if abs(approx) > bound and math.isfinite(approx):
            return 1 if approx > 0 else -1
    except OverflowError:
        pass
    cap = DEFAULT_PRECISION_CAP if cap is None else cap
    precision = _START_PRECISION
    while precision <= cap:
        lo, hi = const.enclosure(precision)
        ends = (r0 + r1 * lo, r0 + r1 * hi)
        if min(ends) > 0:
            return 1
        if max(ends) < 0:
            return -1
        precision *= 2
    raise PrecisionExhausted(f"sign of {r0} + {r1}*{alpha} undecided at {cap} bits")


@dataclass(frozen=True, eq=False)
class ExactScalar:
    """The number q0 + q1*alpha, alpha a registered irrational (or absent).

    Equality is equality of the coefficient pairs, which is value equality
    because 1 and alpha are linearly independent over the rationals.
    """

    q0: Fraction
    q1: Fraction = Fraction(0)
    alpha: Optional[str] = None

    def __post_init__(self) -> None:
        q0, q1 = self.q0, self.q1
        if type(q0) is not Fraction:
            q0 = Fraction(q0)
            object.__setattr__(self, "q0", q0)
        if type(q1) is not Fraction:
            q1 = Fraction(q1)
            object.__setattr__(self, "q1", q1)
        if q1 == 0:
            object.__setattr__(self, "alpha", None)
        elif self.alpha is None:
            raise ValueError("nonzero irrational coefficient requires an alpha id")
        else:
            get_constant(self.alpha)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, Fraction)):
            return self.q1 == 0 and self.q0 == other
        if not isinstance(other, ExactScalar):
            return NotImplemented
        return self.q0 == other.q0 and self.q1 == other.q1 and self.alpha == other.alpha

    def __hash__(self) -> int:
        # rationals hash like the matching Fraction
        return hash(self.q0) if self.q1 == 0 else hash((self.q0, self.q1, self.alpha))

    # -- construction -----------------------------------------------------------------
    @classmethod
    def of(cls, value: "ScalarLike") -> "ExactScalar":
        if isinstance(value, ExactScalar):
            return value
        if isinstance(value, str):
            return parse_scalar(value)
        if isinstance(value, float):
            raise TypeError("floats are not accepted as exact values; pass 'p/q' strings")
        return cls(Fraction(value))

    @classmethod
    def constant(cls, name: str) -> "ExactScalar":
        return cls(Fraction(0), Fraction(1), name)

    @property
    def is_rational(self) -> bool:
        return self.q1 == 0

    # -- arithmetic ---------------------------------------------------------------------
    def _alpha_with(self, other: "ExactScalar") -> Optional[str]:
        if self.alpha and other.alpha and self.alpha != other.alpha:
            raise UnsupportedCombination(f"cannot combine {self.alpha} with {other.alpha}")
        return self.alpha or other.alpha

    def __add__(self, other: "ScalarLike") -> "ExactScalar":
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return ExactScalar(self.q0 + other.q0, self.q1 + other.q1, self._alpha_with(other))

    __radd__ = __add__

    def __sub__(self, other: "ScalarLike") -> "ExactScalar":
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return ExactScalar(self.q0 - other.q0, self.q1 - other.q1, self._alpha_with(other))

    def __rsub__(self, other: "ScalarLike") -> "ExactScalar":
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other - self

    def __neg__(self) -> "ExactScalar":
        return ExactScalar(-self.q0, -self.q1, self.alpha)

    def __mul__(self, other: "ScalarLike") -> "ExactScalar":
        if isinstance(other, (int, Fraction)):
            return ExactScalar(self.q0 * other, self.q1 * other, self.alpha)
        if isinstance(other, ExactScalar):
            if other.is_rational:
                return self * other.q0
            if self.is_rational:
                return other * self.q0
            raise UnsupportedCombination("product of two irrational values leaves Q + Q*alpha")
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other: Rational) -> "ExactScalar":
        if isinstance(other, ExactScalar):
            if not other.is_rational:
                raise UnsupportedCombination("division by an irrational value")
            other = other.q0
        if not isinstance(other, (int, Fraction)):
            return NotImplemented
        return ExactScalar(self.q0 / other, self.q1 / other, self.alpha)

    # -- ordering -----------------------------------------------------------------------
    def sign(self, precision_cap: Optional[int] = None) -> int:
        return _sign_of(self.q0, self.q1, self.alpha, precision_cap)

    def __lt__(self, other: "ScalarLike") -> bool:
        return compare(self, other) < 0

    def __le__(self, other: "ScalarLike") -> bool:
        return compare(self, other) <= 0

    def __gt__(self, other: "ScalarLike") -> bool:
        return compare(self, other) > 0

    def __ge__(self, other: "ScalarLike") -> bool:
        return compare(self, other) >= 0

    def floor(self) -> int:
        if self.is_rational:
            return math.floor(self.q0)
        k = math.floor(float(self))
        while (self - k).sign() < 0:
            k -= 1
        while (self - (k + 1)).sign() >= 0:
            k += 1
        return k

    def __float__(self) -> float:
        if self.is_rational:
            return float(self.q0)
        precision = _START_PRECISION
        while True:
            lo, hi = get_constant(self.alpha).enclosure(precision)
            ends = sorted((self.q0 + self.q1 * lo, self.q0 + self.q1 * hi))
            mid = (ends[0] + ends[1]) / 2
            if mid == 0 or (ends[1] - ends[0]) <= abs(mid) * Fraction(1, 2**60) or precision >= 1024:
                return float(mid)
            precision *= 2

    def __str__(self) -> str:
        if self.is_rational:
            return str(self.q0)
        if self.q0 == 0:
            return f"{self.q1}*{self.alpha}"
        sign = "+" if self.q1 > 0 else "-"
        return f"{self.q0} {sign} {abs(self.q1)}*{self.alpha}"

    def __repr__(self) -> str:
        return f"ExactScalar({self})"


ScalarLike = Union[ExactScalar, int, Fraction, str]

ZERO = ExactScalar(Fraction(0))
ONE = ExactScalar(Fraction(1))
HALF = ExactScalar(Fraction(1, 2))


def _coerce(value):
    if isinstance(value, ExactScalar):
        return value
    if isinstance(value, (int, Fraction)):
        return ExactScalar(Fraction(value))
    return NotImplemented


def compare(a: ScalarLike, b: ScalarLike, precision_cap: Optional[int] = None) -> int:
    """Return -1, 0 or 1 as ``a`` is less than, equal to or greater than ``b``."""
    a, b = ExactScalar.of(a), ExactScalar.of(b)
    if a == b:
        return 0
    if a.alpha and b.alpha and a.alpha != b.alpha:
        raise UnsupportedCombination(f"cannot order {a} against {b}: different constants")
    if a.q1 == b.q1:
        return (a.q0 > b.q0) - (a.q0 < b.q0)
    try:
        return _sign_of(a.q0 - b.q0, a.q1 - b.q1, a.alpha or b.alpha, precision_cap)
    except PrecisionExhausted as exc:
        raise PrecisionExhausted(f"cannot order {a} against {b}: {exc}") from None


def reduce_mod_1(a: ScalarLike) -> ExactScalar:
    """Representative of ``a`` in [0, 1)."""
    a = ExactScalar.of(a)
    k = a.floor()
    return a if k == 0 else a - k


def circle_distance(x: ScalarLike, y: ScalarLike) -> ExactScalar:
    """min(|x - y|, 1 - |x - y|) on the circle [0, 1)."""
    r = reduce_mod_1(ExactScalar.of(x) - ExactScalar.of(y))
    other = ONE - r
    return r if r <= other else other


_TERM = re.compile(
    r"""\s*(?P<sign>[+-])?\s*
        (?:(?P<coef>\d+(?:/\d+|\.\d*)?)\s*\*?\s*)?
        (?P<name>[A-Za-z_]\w*)?\s*""",
    re.VERBOSE,
)


def parse_rational(text: Union[str, int]) -> Fraction:
    """Parse 'p/q', integers and decimal strings exactly."""
    if isinstance(text, int) and not isinstance(text, bool):
        return Fraction(text)
    if not isinstance(text, str):
        raise ValueError(f"expected a rational string like 'p/q', got {text!r}")
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a rational: {text!r}") from None


def parse_scalar(text: str) -> ExactScalar:
    """Parse strings such as '3/4', 'golden_conjugate', '1/2 - 2*golden_conjugate'."""
    src = text.strip()
    if not src:
        raise ValueError("empty scalar")
    pos, total = 0, ZERO
    while pos < len(src):
        m = _TERM.match(src, pos)
        if m is None or m.end() == pos or not (m.group("coef") or m.group("name")):
            raise ValueError(f"cannot parse scalar {text!r}")
        coef = Fraction(m.group("coef")) if m.group("coef") else Fraction(1)
        if m.group("sign") == "-":
            coef = -coef
        if m.group("name"):
            total = total + ExactScalar(Fraction(0), coef, m.group("name"))
        else:
            total = total + coef
        pos = m.end()
    return total
