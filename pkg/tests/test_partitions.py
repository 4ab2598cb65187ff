import logging
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from partsens import arcs as A
from partsens import partitions as PT
from partsens import systems as S
from partsens.exact import ExactScalar

from oracles import GOLDEN_MAX_GAP, dyadic_cells
from strategies import breakpoint_lists, unit_points

F = Fraction
GOLDEN = ExactScalar.constant("golden_conjugate")
B = PT.binary_partition()


def exact_pairs(cells):
    return sorted((ExactScalar.of(a), ExactScalar.of(b)) for a, b in cells)


def as_pairs(P):
    return sorted(arc for c in P.cells for arc in c.arcs)


@pytest.mark.parametrize("n", range(6))
def test_doubling_refinement_matches_dyadic_oracle(n):
    P = PT.iterated_join(S.doubling(), B, n)
    assert as_pairs(P) == exact_pairs(dyadic_cells(n))
    assert all(len(c.arcs) == 1 for c in P.cells)


def test_doubling_depth_twelve():
    P = PT.iterated_join(S.doubling(), B, 12)
    assert len(P) == 8192
    assert set(P.measures()) == {ExactScalar.of(F(1, 8192))}


@pytest.mark.parametrize("n", sorted(GOLDEN_MAX_GAP))
def test_golden_rotation_matches_gap_oracle(n):
    count, p, q = GOLDEN_MAX_GAP[n]
    P = PT.iterated_join(S.rotation(GOLDEN), B, n)
    assert len(P) == count
    assert P.max_cell_measure() == ExactScalar(p, q, "golden_conjugate")


def test_rational_rotation_stabilizes():
    counts = [len(P) for P in PT.refinements(S.rotation(F(1, 3)), B, 4)]
    assert counts == [2, 4, 6, 6, 6]
    P = PT.iterated_join(S.rotation(F(1, 3)), B, 2)
    assert set(P.measures()) == {ExactScalar.of(F(1, 6))}


def test_cell_cap_reports_partial_result():
    with pytest.raises(S.ResourceLimitError) as info:
        PT.iterated_join(S.doubling(), B, 12, cell_cap=1000)
    assert info.value.reached == 8
    assert len(info.value.partial) == 512


def test_constant_map_pullback_drops_empty_cells(caplog):
    P = PT.Partition.from_breakpoints([0, F(1, 4), F(1, 2), F(3, 4)])
    with caplog.at_level(logging.WARNING):
        Q = PT.pullback(S.constant(F(1, 3)), P)
    assert len(Q) == 1 and Q.dropped == 3
    assert "dropped 3" in caplog.text


def test_from_cells_validates():
    cells = [A.arc(F(3, 4), F(5, 4)), A.arc(F(1, 4), F(3, 4))]
    P = PT.Partition.from_cells(cells)
    assert len(P) == 2 and P.label_at(F(7, 8)) == P.label_at(F(1, 8))
    with pytest.raises(ValueError):
        PT.Partition.from_cells([A.arc(0, F(1, 2))])
    with pytest.raises(ValueError):
        PT.Partition.from_cells([A.arc(0, F(3, 4)), A.arc(F(1, 2), 1)])


def maps():
    return st.sampled_from([S.doubling(), S.expanding(3), S.rotation(F(2, 7)), S.rotation(GOLDEN),
                            S.interval_exchange(F(1, 3)), S.identity()])


partitions = breakpoint_lists().map(PT.Partition.from_breakpoints)


@given(partitions, partitions)
def test_join_is_commutative_and_refines(P, Q):
    J = PT.join(P, Q)
    assert J == PT.join(Q, P)
    assert J.refines(P) and J.refines(Q)
    assert PT.join(P, P) == P
    assert sum(J.measures(), ExactScalar.of(0)) == ExactScalar.of(1)


@given(maps(), partitions)
def test_pullback_preserves_cell_measures(f, P):
    Q = PT.pullback(f, P)
    assert sorted(Q.measures()) == sorted(P.measures())


@given(maps(), partitions, st.integers(1, 4))
def test_refinement_chain_properties(f, P, n):
    chain = list(PT.refinements(f, P, n))
    sups = [Q.max_cell_measure() for Q in chain]
    assert all(b <= a for a, b in zip(sups, sups[1:]))
    for a, b in zip(chain, chain[1:]):
        assert b.refines(a)


@given(maps(), partitions, unit_points, st.integers(0, 4))
def test_itinerary_cell_matches_join(f, P, x, n):
    cell = PT.itinerary_cell(f, P, x, n)
    J = PT.iterated_join(f, P, n)
    assert x in cell.cell
    assert cell.cell.arcs == J.cell_containing(x).arcs


@given(partitions, unit_points)
def test_label_lookup_agrees_with_cells(P, x):
    assert x in P.cell_containing(x)
    assert sum(x in c for c in P.cells) == 1


def test_shift_refinement_is_cylinders():
    b = S.BernoulliShift(["3/10", "7/10"])
    C = PT.ShiftPartition.cylinders(b)
    for n, P in enumerate(PT.refinements(b, C, 6)):
        assert P == PT.ShiftPartition.cylinders(b, n + 1)
        assert sum(P.measures()) == 1
    assert PT.ShiftPartition.cylinders(b, 3).max_cell_measure() == F(343, 1000)
    with pytest.raises(PT.UnsupportedCombination):
        C.max_cell_diameter()


def test_shift_itinerary_cell():
    b = S.BernoulliShift(["1/2", "1/2"])
    C = PT.ShiftPartition.cylinders(b)
    x = b.point_from_symbols([1, 0, 0, 1, 1, 0])
    cell = PT.itinerary_cell(b, C, x, 4)
    assert cell.cell.pattern == (1, 0, 0, 1, 1)
    assert cell.measure == F(1, 32)
    assert x in cell.cell


def test_invariance_checks():
    d = S.doubling()
    results = [PT.positively_invariant_check(d, c) for c in B.cells]
    assert [r.status for r in results] == ["not_invariant", "not_invariant"]
    assert [r.excess for r in results] == [ExactScalar.of(F(1, 4))] * 2
    seq = PT.invariant_intersection_measure(d, A.arc(0, F(1, 2)), 4)
    assert seq == [ExactScalar.of(F(1, 2 ** k)) for k in range(1, 6)]
    assert PT.positively_invariant_check(S.identity(), B.cells[0]).invariant_mod_0


def test_max_cell_diameter():
    P = PT.iterated_join(S.doubling(), B, 5)
    assert P.max_cell_diameter() == ExactScalar.of(F(1, 64))
    assert B.max_cell_diameter() == ExactScalar.of(F(1, 2))
