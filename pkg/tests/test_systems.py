from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from partsens import arcs as A
from partsens import systems as S
from partsens.exact import ExactScalar, reduce_mod_1

from strategies import arcsets, small_rationals, unit_points

F = Fraction
GOLDEN = ExactScalar.constant("golden_conjugate")


def catalog():
    return [
        S.doubling(),
        S.expanding(3),
        S.rotation(F(1, 3)),
        S.rotation(GOLDEN),
        S.identity(),
        S.interval_exchange(F(2, 5)),
    ]


def test_catalog_values():
    d = S.doubling()
    assert d(F(3, 8)) == ExactScalar.of(F(3, 4))
    assert d(F(3, 4)) == ExactScalar.of(F(1, 2))
    r = S.rotation(F(1, 3))
    assert r(F(5, 6)) == ExactScalar.of(F(1, 6))
    g = S.rotation(GOLDEN)
    assert g(F(1, 2)) == reduce_mod_1(GOLDEN + F(1, 2))
    assert S.constant(F(1, 3))(F(9, 10)) == ExactScalar.of(F(1, 3))
    e = S.interval_exchange(F(2, 5))
    assert e(0) == ExactScalar.of(F(3, 5)) and e(F(2, 5)) == ExactScalar.of(0)


def test_rejects_bad_maps():
    with pytest.raises(ValueError):
        S.PiecewiseAffineCircleMap([S.Branch(ExactScalar.of(0), ExactScalar.of(F(1, 2)), F(1), ExactScalar.of(0))])
    with pytest.raises(ValueError, match="measure-preserving"):
        S.PiecewiseAffineCircleMap(S.constant(0).branches, measure_preserving=True)
    with pytest.raises(ValueError):
        S.doubling()(1)
    with pytest.raises(ValueError):
        S.expanding(1)


@pytest.mark.parametrize("system", catalog(), ids=lambda s: s.name)
@given(x=arcsets())
def test_lebesgue_measure_is_invariant(system, x):
    assert A.measure(system.preimage(x)) == A.measure(x)


@pytest.mark.parametrize("system", catalog() + [S.constant(F(1, 3))], ids=lambda s: s.name)
@given(x=arcsets(), p=unit_points)
def test_preimage_membership(system, x, p):
    assert A.contains(system.preimage(x), p) == A.contains(x, system(p))


@pytest.mark.parametrize("system", catalog(), ids=lambda s: s.name)
@given(p=unit_points, k=st.integers(1, 5))
def test_compose_power_matches_iteration(system, p, k):
    assert S.compose_power(system, k)(p) == S.iterate(system, p, k)


def test_compose_power_branch_counts():
    assert len(S.compose_power(S.doubling(), 5).branches) == 32
    assert len(S.compose_power(S.rotation(F(1, 3)), 3).simplified().branches) == 1
    with pytest.raises(S.ResourceLimitError):
        S.compose_power(S.doubling(), 12, branch_cap=1000)


@given(small_rationals)
def test_black_box_twin_agrees(x):
    for system in catalog():
        box = S.as_black_box(system)
        got = box.iterate(np.array([float(x)]))[0]
        want = float(system(x))
        assert min(abs(got - want), 1 - abs(got - want)) < 1e-12


def test_bernoulli_validation_and_measures():
    with pytest.raises(ValueError):
        S.BernoulliShift([F(1, 2), F(1, 3)])
    with pytest.raises(ValueError):
        S.BernoulliShift([F(1)])
    b = S.BernoulliShift(["3/10", "7/10"])
    assert b.word_measure([0, 1, 1]) == F(3, 10) * F(49, 100)
    assert b.entropy() == pytest.approx(0.6108643020548935, abs=1e-15)


def test_shift_points_are_deterministic_and_shiftable():
    b = S.BernoulliShift(["3/10", "7/10"])
    x = b.point(7)
    assert x.word(10000) == b.point(7).word(10000)
    assert b(x).word(50) == x.word(51)[1:]
    assert x.word(5000) != b.point(8).word(5000)
    ones = sum(x.word(20000)) / 20000
    assert abs(ones - 0.7) < 0.02
    fixed = b.point_from_symbols([0, 1, 1])
    assert fixed.word(3) == (0, 1, 1)
    with pytest.raises(IndexError):
        fixed.word(4)
