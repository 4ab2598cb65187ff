import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from partsens import entropy as E
from partsens import partitions as PT
from partsens import systems as S
from partsens.exact import ExactScalar

from oracles import BERNOULLI_3_7_ENTROPY, LOG2
from strategies import breakpoint_lists

F = Fraction
B = PT.binary_partition()
GOLDEN = ExactScalar.constant("golden_conjugate")
partitions = breakpoint_lists().map(PT.Partition.from_breakpoints)


def test_basic_entropies():
    assert E.partition_entropy(B) == pytest.approx(LOG2, abs=1e-15)
    assert E.partition_entropy(B, "2") == pytest.approx(1.0, abs=1e-15)
    assert E.partition_entropy(PT.Partition.from_breakpoints([0])) == 0
    b = S.BernoulliShift(["3/10", "7/10"])
    assert E.partition_entropy(PT.ShiftPartition.cylinders(b)) == pytest.approx(BERNOULLI_3_7_ENTROPY, abs=1e-15)
    with pytest.raises(ValueError):
        E.partition_entropy(B, "10")


def test_exact_log_handles_tiny_rationals():
    assert E.exact_log(F(1, 2**2000)) == pytest.approx(-2000 * LOG2, rel=1e-15)


def test_doubling_rate_is_log2():
    s = E.entropy_rate_series(S.doubling(), B, 13)
    assert s.depths == list(range(1, 14))
    assert max(abs(r - LOG2) for r in s.rates) < 1e-12


def test_golden_rate_bound_and_decay():
    s = E.entropy_rate_series(S.rotation(GOLDEN), B, 40)
    for n, r in zip(s.depths, s.rates):
        assert 0 <= r <= math.log(2 * n + 2) / n + 1e-12
    assert s.rates[-1] < s.rates[0] / 4


def test_identity_rate_is_log2_over_n():
    s = E.entropy_rate_series(S.identity(), B, 8)
    assert s.rates == pytest.approx([LOG2 / n for n in range(1, 9)], abs=1e-15)


def test_bernoulli_rate_is_exact_entropy():
    b = S.BernoulliShift(["3/10", "7/10"])
    s = E.entropy_rate_series(b, PT.ShiftPartition.cylinders(b), 10)
    assert max(abs(r - BERNOULLI_3_7_ENTROPY) for r in s.rates) < 1e-12


def test_series_truncates_at_cap():
    s = E.entropy_rate_series(S.doubling(), B, 20, cell_cap=5000)
    assert s.truncated and len(s.depths) == 12


def test_csv_columns():
    csv = E.entropy_rate_series(S.doubling(), B, 2).to_csv().splitlines()
    assert csv[0] == "n,H,H_over_n"
    assert len(csv) == 3


def test_smb_examples():
    b = S.BernoulliShift(["1/2", "1/2"])
    C = PT.ShiftPartition.cylinders(b)
    # P_n(x) fixes n + 1 symbols, so the rate is (n+1)/n log 2, as for doubling
    assert E.smb_local_rate(b, C, b.point(3), 700) == pytest.approx(701 / 700 * LOG2, abs=1e-12)
    for n in (1, 5, 30):
        assert E.smb_local_rate(S.doubling(), B, F(1, 3), n) == pytest.approx((n + 1) / n * LOG2, abs=1e-12)
    with pytest.raises(ValueError):
        E.smb_local_rate(S.doubling(), B, 0, 0)


def test_degenerate_cell_is_reported(monkeypatch):
    monkeypatch.setattr(E, "itinerary_cell", lambda system, P, x, n: PT.ItineraryCell(x, n, PT.ArcCell(())))
    with pytest.raises(E.DegenerateCellError, match="x = 1/4"):
        E.smb_local_rate(S.doubling(), B, F(1, 4), 1)


def test_smb_average_matches_rate():
    b = S.BernoulliShift(["3/10", "7/10"])
    C = PT.ShiftPartition.cylinders(b)
    rates = E.smb_rates(b, C, [b.point(s) for s in range(32)], 2000)
    tail = E.entropy_rate_series(b, C, 8).rates[-1]
    se = rates.std(ddof=1) / np.sqrt(len(rates))
    assert abs(rates.mean() - tail) <= 3 * se


@given(partitions, partitions)
def test_join_does_not_lower_entropy(P, Q):
    h = E.partition_entropy(PT.join(P, Q))
    assert h >= max(E.partition_entropy(P), E.partition_entropy(Q)) - 1e-12


@given(st.sampled_from([S.doubling(), S.rotation(GOLDEN), S.rotation(F(3, 8))]), partitions)
def test_entropy_grows_along_refinements(f, P):
    hs = [E.partition_entropy(Q) for Q in PT.refinements(f, P, 4)]
    assert all(b >= a - 1e-12 for a, b in zip(hs, hs[1:]))
    s = E.entropy_rate_series(f, P, 5)
    for n, r, cells in zip(s.depths, s.rates, s.cell_counts):
        assert 0 <= r <= math.log(cells) / n + 1e-12
