"""Vectorised exact breakpoints: values (A + B*alpha) / D with integer arrays A, B.

int64 storage is used while magnitudes stay below 2**61 and Python-int object
arrays take over beyond that.  Signs are decided by a binary64 filter on exact
integer differences, with per-element certified fallback.
"""
from __future__ import annotations

import math
from fractions import Fraction
from functools import cmp_to_key, reduce
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .exact import ExactScalar, UnsupportedCombination, _sign_of, get_constant

_LIMIT = 2**61


def _maxabs(arr: np.ndarray) -> int:
    if arr.size == 0:
        return 0
    if arr.dtype == object:
        return max(abs(int(v)) for v in arr)
    return int(np.abs(arr).max())


def _compact(arr: np.ndarray) -> np.ndarray:
    if arr.dtype == object and _maxabs(arr) < _LIMIT:
        return arr.astype(np.int64)
    return arr


def _ints(values: Sequence[int]) -> np.ndarray:
    values = [int(v) for v in values]
    if values and max(abs(v) for v in values) >= _LIMIT:
        return np.array(values, dtype=object)
    return np.array(values, dtype=np.int64)


def _mul(arr: np.ndarray, k: int) -> np.ndarray:
    if k == 1:
        return arr
    if arr.dtype != object and _maxabs(arr) * abs(k) < _LIMIT:
        return arr * k
    return arr.astype(object) * k


def _add(x: np.ndarray, y) -> np.ndarray:
    """x + y where y is an array or a Python int."""
    bound = _maxabs(x) + (abs(y) if isinstance(y, int) else _maxabs(y))
    if bound < _LIMIT and x.dtype != object and (isinstance(y, int) or y.dtype != object):
        return x + y
    return x.astype(object) + (y if isinstance(y, int) else y.astype(object))


def _gcd_all(arr: np.ndarray) -> int:
    if arr.size == 0:
        return 0
    if arr.dtype == object:
        return reduce(math.gcd, (int(v) for v in arr), 0)
    return int(np.gcd.reduce(np.abs(arr)))


def signs(X: np.ndarray, Y: Optional[np.ndarray], alpha: Optional[str]) -> np.ndarray:
    """Certified sign of X + Y*alpha elementwise (integer arrays)."""
    if Y is None or alpha is None:
        if X.dtype == object:
            return np.array([(v > 0) - (v < 0) for v in X], dtype=np.int64)
        return np.sign(X).astype(np.int64)
    a = get_constant(alpha).approx
    try:
        Xf = X.astype(float)
        Yf = Y.astype(float)
    except OverflowError:
        Xf = Yf = None
    out = np.zeros(len(X), dtype=np.int64)
    if Xf is not None:
        with np.errstate(over="ignore", invalid="ignore"):
            approx = Xf + Yf * a
            bound = (np.abs(Xf) + 2.0 * np.abs(Yf) * (abs(a) + 1.0) + np.abs(approx)) * 2.0**-48
        ok = np.isfinite(approx)
        out[ok & (approx > bound)] = 1
        out[ok & (approx < -bound)] = -1
        todo = np.nonzero(out == 0)[0]
    else:
        todo = range(len(X))
    for i in todo:
        out[i] = _sign_of(Fraction(int(X[i])), Fraction(int(Y[i])), alpha)
    return out


class Points:
    """Array of exact values (A + B*alpha) / D; B is None for rational arrays."""

    __slots__ = ("A", "B", "D", "alpha")

    def __init__(self, A: np.ndarray, B: Optional[np.ndarray], D: int, alpha: Optional[str]):
        if D <= 0:
            raise ValueError("denominator must be positive")
        if alpha is None and B is not None:
            if _maxabs(B) != 0:
                raise ValueError("irrational coefficients without a constant")
            B = None
        self.A, self.B, self.D, self.alpha = A, B, int(D), alpha

    @classmethod
    def from_scalars(cls, values: Sequence[ExactScalar], alpha: Optional[str] = None) -> "Points":
        alphas = {v.alpha for v in values} - {None}
        if alpha:
            alphas.add(alpha)
        if len(alphas) > 1:
            raise UnsupportedCombination(f"mixed constants {sorted(alphas)}")
        alpha = alphas.pop() if alphas else None
        D = 1
        for v in values:
            D = math.lcm(D, v.q0.denominator, v.q1.denominator)
        A = _ints([v.q0 * D for v in values])
        B = _ints([v.q1 * D for v in values]) if alpha else None
        return cls(A, B, D, alpha)

    @classmethod
    def empty(cls, alpha: Optional[str] = None) -> "Points":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64) if alpha else None, 1, alpha)

    def __len__(self) -> int:
        return len(self.A)

    @property
    def Bz(self) -> np.ndarray:
        return self.B if self.B is not None else np.zeros(len(self.A), dtype=np.int64)

    def scalar(self, i: int) -> ExactScalar:
        b = 0 if self.B is None else int(self.B[i])
        return ExactScalar(Fraction(int(self.A[i]), self.D), Fraction(b, self.D), self.alpha if b else None)

    def scalars(self) -> List[ExactScalar]:
        return [self.scalar(i) for i in range(len(self))]

    def take(self, idx) -> "Points":
        return Points(self.A[idx], None if self.B is None else self.B[idx], self.D, self.alpha)

    def rescaled(self, D: int) -> "Points":
        if D % self.D:
            raise ValueError("new denominator must be a multiple")
        k = D // self.D
        return Points(_mul(self.A, k), None if self.B is None else _mul(self.B, k), D, self.alpha)

    def reduced(self) -> "Points":
        g = math.gcd(_gcd_all(self.A), self.D)
        if self.B is not None:
            g = math.gcd(g, _gcd_all(self.B))
        if g <= 1:
            return Points(_compact(self.A), None if self.B is None else _compact(self.B), self.D, self.alpha)
        A = _compact(self.A // g)
        B = None if self.B is None else _compact(self.B // g)
        return Points(A, B, self.D // g, self.alpha)

    @staticmethod
    def concat(parts: Sequence["Points"]) -> "Points":
        parts = [p for p in parts]
        alphas = {p.alpha for p in parts} - {None}
        if len(alphas) > 1:
            raise UnsupportedCombination(f"mixed constants {sorted(alphas)}")
        alpha = alphas.pop() if alphas else None
        D = reduce(math.lcm, (p.D for p in parts), 1)
        scaled = [p.rescaled(D) for p in parts]
        obj = any(s.A.dtype == object or (s.B is not None and s.B.dtype == object) for s in scaled)
        dtype = object if obj else np.int64
        A = np.concatenate([s.A.astype(dtype) for s in scaled]) if scaled else np.zeros(0, np.int64)
        B = None
        if alpha:
            B = np.concatenate([s.Bz.astype(dtype) for s in scaled])
        return Points(A, B, D, alpha)

    def _scalar_num(self, value: ExactScalar, D: int) -> Tuple[int, int]:
        return int(value.q0 * D), int(value.q1 * D)

    def affine(self, scale: Fraction, shift: ExactScalar) -> "Points":
        """Elementwise value*scale + shift."""
        scale = Fraction(scale)
        alpha = self.alpha or shift.alpha
        if self.alpha and shift.alpha and self.alpha != shift.alpha:
            raise UnsupportedCombination("mixed constants in affine map")
        D = math.lcm(self.D * scale.denominator, shift.q0.denominator, shift.q1.denominator)
        k = D // (self.D * scale.denominator)
        s0, s1 = self._scalar_num(shift, D)
        A = _add(_mul(self.A, scale.numerator * k), s0)
        B = None
        if alpha:
            B = _add(_mul(self.Bz, scale.numerator * k), s1)
        return Points(A, B, D, alpha).reduced()

    def signs_against(self, value: ExactScalar) -> np.ndarray:
        """Certified sign of (point - value) for every point."""
        if self.alpha and value.alpha and self.alpha != value.alpha:
            raise UnsupportedCombination("mixed constants in comparison")
        alpha = self.alpha or value.alpha
        D = math.lcm(self.D, value.q0.denominator, value.q1.denominator)
        k = D // self.D
        v0, v1 = self._scalar_num(value, D)
        X = _add(_mul(self.A, k), -v0)
        Y = _add(_mul(self.Bz, k), -v1) if alpha else None
        return signs(X, Y, alpha)

    def count_at_most(self, value: ExactScalar) -> int:
        return int(np.count_nonzero(self.signs_against(value) <= 0))

    def sort_unique(self) -> Tuple["Points", np.ndarray]:
        """Sorted distinct values and the inverse map from original positions."""
        n = len(self)
        if n == 0:
            return self, np.zeros(0, dtype=np.int64)
        if self.B is None:
            uniq, inv = np.unique(self.A, return_inverse=True)
            return Points(uniq, None, self.D, None), inv.reshape(-1)
        if self.A.dtype != object and self.B.dtype != object:
            pairs = np.stack([self.A, self.B], axis=1)
            upairs, inv = np.unique(pairs, axis=0, return_inverse=True)
            uA, uB = upairs[:, 0].copy(), upairs[:, 1].copy()
        else:
            seen = {}
            inv = np.empty(n, dtype=np.int64)
            for i in range(n):
                key = (int(self.A[i]), int(self.B[i]))
                inv[i] = seen.setdefault(key, len(seen))
            uA = _ints([k[0] for k in seen])
            uB = _ints([k[1] for k in seen])
        inv = inv.reshape(-1)
        order = self._certified_order(uA, uB)
        rank = np.empty(len(order), dtype=np.int64)
        rank[order] = np.arange(len(order))
        return Points(uA[order], uB[order], self.D, self.alpha), rank[inv]

    def _certified_order(self, uA: np.ndarray, uB: np.ndarray) -> np.ndarray:
        a = get_constant(self.alpha).approx
        try:
            key = uA.astype(float) + uB.astype(float) * a
            order = np.argsort(key, kind="stable")
        except OverflowError:
            order = np.arange(len(uA))
        if len(order) > 1:
            sA, sB = uA[order], uB[order]
            dX = _add(sA[1:], -sA[:-1])
            dY = _add(sB[1:], -sB[:-1])
            if np.all(signs(dX, dY, self.alpha) > 0):
                return order

        def cmp(i: int, j: int) -> int:
            return _sign_of(Fraction(int(uA[i] - uA[j])), Fraction(int(uB[i] - uB[j])), self.alpha)

        return np.array(sorted(range(len(uA)), key=cmp_to_key(cmp)), dtype=np.int64)

    def lengths(self) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """Numerators of p[i+1] - p[i] over D, the last one running up to 1."""
        A = self.A if self.D < _LIMIT else self.A.astype(object)
        nxtA = np.concatenate([A[1:], np.array([self.D], dtype=A.dtype)])
        dA = nxtA - A
        dB = None
        if self.B is not None:
            nxtB = np.concatenate([self.B[1:], np.zeros(1, dtype=self.B.dtype)])
            dB = nxtB - self.B
        return dA, dB

    def equals(self, other: "Points") -> bool:
        if len(self) != len(other) or self.alpha != other.alpha:
            return False
        D = math.lcm(self.D, other.D)
        a, b = self.rescaled(D), other.rescaled(D)
        if not np.array_equal(a.A.astype(object), b.A.astype(object)):
            return False
        return a.B is None and b.B is None or np.array_equal(a.Bz.astype(object), b.Bz.astype(object))
