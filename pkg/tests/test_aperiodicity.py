import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from partsens import aperiodicity as AP
from partsens import systems as S
from partsens.exact import ExactScalar
from partsens.systems import Branch, PiecewiseAffineCircleMap

F = Fraction
E = ExactScalar.of
GOLDEN = ExactScalar.constant("golden_conjugate")


def collapsing_map():
    # [0, 1/4) -> 1/2, doubling elsewhere; 0 and 1/2 form a 2-cycle
    return PiecewiseAffineCircleMap(
        [Branch(E(0), E(F(1, 4)), F(0), E(F(1, 2))), Branch(E(F(1, 4)), E(1), F(2), E(0))],
        name="collapse",
    )


@pytest.mark.parametrize("n", range(1, 9))
def test_doubling_periodic_points(n):
    fix = AP.fixed_point_set(S.doubling(), n)
    assert fix.points == [E(F(k, 2 ** n - 1)) for k in range(2 ** n - 1)]
    assert not fix.arcs and fix.measure == 0


def test_golden_rotation_has_no_periodic_points():
    for n in range(1, 21):
        assert AP.fixed_point_set(S.rotation(GOLDEN), n).is_empty


@given(st.integers(1, 7), st.integers(2, 7), st.integers(1, 12))
def test_rational_rotation_fixed_sets(p, q, n):
    fix = AP.fixed_point_set(S.rotation(F(p, q)), n)
    if (p * n) % q == 0:
        assert fix.measure == 1 and not fix.points
    else:
        assert fix.is_empty


def test_interval_exchange_is_periodic_everywhere():
    fix = AP.fixed_point_set(S.interval_exchange(F(1, 3)), 3)
    assert fix.measure == 1


@given(st.integers(1, 4), st.integers(0, 4))
def test_doubling_probe_is_null(n, k):
    assert AP.eventual_aperiodicity_probe(S.doubling(), n, k).verdict == "aperiodic"


def test_probe_examples():
    assert AP.eventual_aperiodicity_probe(S.constant(F(1, 3)), 1, 1).measure == 1
    assert AP.eventual_aperiodicity_probe(S.constant(F(1, 3)), 1, 0).measure == 0
    assert AP.eventual_aperiodicity_probe(S.rotation(F(1, 3)), 3, 0).measure == 1
    assert AP.eventual_aperiodicity_probe(S.rotation(GOLDEN), 4, 3).measure == 0
    b = S.BernoulliShift(["3/10", "7/10"])
    assert AP.eventual_aperiodicity_probe(b, 2, 2).verdict == "aperiodic"


def _eventually_periodic(f, x, n, k):
    orbit = [x]
    for _ in range(n + k):
        orbit.append(f(orbit[-1]))
    return any(orbit[i + n] == orbit[i] for i in range(k + 1))


@pytest.mark.parametrize("n,k", [(1, 0), (2, 1), (2, 3), (4, 2)])
def test_probe_measure_matches_orbit_sampling(n, k):
    f = collapsing_map()
    measure = AP.eventual_aperiodicity_probe(f, n, k).measure
    rnd = random.Random(n * 100 + k)
    trials = 2000
    hits = sum(_eventually_periodic(f, E(F(rnd.randrange(10 ** 9), 10 ** 9)), n, k) for _ in range(trials))
    p = float(measure)
    se = max((p * (1 - p) / trials) ** 0.5, 1 / trials)
    assert abs(hits / trials - p) <= 4 * se


def test_probe_is_monotone_in_k():
    f = collapsing_map()
    ms = [AP.eventual_aperiodicity_probe(f, 2, k).measure for k in range(5)]
    assert all(a <= b for a, b in zip(ms, ms[1:]))
    assert ms[0] == 0 and ms[1] == F(1, 4)


def test_probe_grid_shape():
    grid = AP.probe_grid(S.doubling(), 3, 2)
    assert [(g.n, g.k) for g in grid] == [(n, k) for n in range(1, 4) for k in range(3)]


def test_probe_arguments():
    with pytest.raises(ValueError):
        AP.eventual_aperiodicity_probe(S.doubling(), 0, 1)
    with pytest.raises(ValueError):
        AP.fixed_point_set(S.doubling(), 0)


def test_idempotent_check():
    r = AP.idempotent_power_check(S.doubling(), 2)
    assert not r.satisfies
    assert r.fk_value != r.f_value
    assert r.fk_value == S.doubling()(S.doubling()(r.witness))
    for f, k in [(S.identity(), 3), (S.constant(F(2, 5)), 2), (S.rotation(F(1, 3)), 4)]:
        assert AP.idempotent_power_check(f, k).satisfies
    assert not AP.idempotent_power_check(S.rotation(F(1, 3)), 3).satisfies
    with pytest.raises(ValueError):
        AP.idempotent_power_check(S.doubling(), 1)
