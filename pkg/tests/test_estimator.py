import pytest
from hypothesis import given, strategies as st

from gridmine.estimator import (
    Duration,
    UnitMismatchError,
    estimate_clustering,
    estimate_itemsets,
    overhead,
    paper_preset,
    relative_gain,
)
from gridmine.exceptions import ValidationError
from gridmine.gridsim import LinkMatrix, StagePlan


@pytest.fixture
def t2():
    return LinkMatrix.table2()


def test_overhead_clustering_row():
    r = overhead(1050, 19.52, "s", "V-Clustering")
    assert r.rounded_pct == 98.1
    assert abs(r.overhead_pct - 98) <= 0.5


def test_overhead_gfm_row():
    assert overhead(521, 424, "min").rounded_pct == 18.6


def test_overhead_fdm_row():
    assert overhead(687, 518, "min").rounded_pct == 24.6


def test_overhead_zero():
    r = overhead(100, 100, "s")
    assert r.overhead_pct == 0.0 and not r.estimator_exceeds_measurement


def test_overhead_negative_is_flagged():
    r = overhead(10, 12, "s")
    assert r.overhead_pct == pytest.approx(-20.0)
    assert r.estimator_exceeds_measurement
    assert r.to_dict()["diagnostic"] == "estimator exceeds measurement"


def test_overhead_unit_handling():
    assert overhead("1050s", "19.52s").unit == "s"
    assert overhead(Duration(521, "min"), Duration(424, "min")).rounded_pct == 18.6
    with pytest.raises(UnitMismatchError):
        overhead("521min", "424s")
    with pytest.raises(ValidationError):
        overhead("521", "424")
    with pytest.raises(ValidationError):
        overhead(0, 0, "s")
    with pytest.raises(ValidationError):
        Duration(1, "days")


@given(st.floats(1e-3, 1e6), st.floats(0, 1e6))
def test_overhead_complement(m, e):
    r = overhead(m, e, "s")
    # exact up to rounding on the magnitude of the terms
    assert r.overhead_pct + 100 * e / m == pytest.approx(100.0, abs=1e-12 * (100 + 100 * e / m))


def test_relative_gain():
    assert round(relative_gain(687, 521), 1) == 24.2
    assert round(relative_gain(518, 424), 1) == 18.1
    assert relative_gain(5, 5) == 0.0
    with pytest.raises(ValidationError):
        relative_gain(0, 1)


def test_paper_preset():
    rows = [(r.task, r.measured, r.estimated, r.rounded_pct) for r in paper_preset()]
    assert rows == [("V-Clustering", 1050, 19.52, 98.1), ("GFM", 521, 424, 18.6), ("FDM", 687, 518, 24.6)]


def test_estimate_clustering_table3(t2):
    # five processes on the five sites; Sophia's statistics to Orsay cost 0.028 + 0.492 s
    locals_ = [18.0, 17.5, 19.0, 18.2, 16.9]
    payloads = [0, 800, 800, 800, 1_319_175]
    est = estimate_clustering(locals_, 0.0, payloads, t2, aggregation_site=0)
    assert est == pytest.approx(19.52, abs=1e-4)
    assert round(est, 2) == 19.52


def test_estimate_clustering_trivial(t2):
    assert estimate_clustering([3.0], 0.5, [0], t2) == 3.5
    assert estimate_clustering([0.0, 0.0], 0.0, [0, 0], t2) == 0.0


def test_estimate_clustering_monotone(t2):
    base = estimate_clustering([1.0, 2.0, 1.5], 0.1, [100, 200, 300], t2)
    assert estimate_clustering([1.0, 2.5, 1.5], 0.1, [100, 200, 300], t2) > base
    assert estimate_clustering([1.0, 2.0, 1.5], 0.2, [100, 200, 300], t2) > base
    assert estimate_clustering([1.0, 2.0, 1.5], 0.1, [100, 200, 10**6], t2) > base


def test_estimate_clustering_errors(t2):
    with pytest.raises(ValidationError):
        estimate_clustering([], 0, [], t2)
    with pytest.raises(ValidationError):
        estimate_clustering([1.0], 0, [1, 2], t2)
    with pytest.raises(ValidationError):
        estimate_clustering([1.0], 0, [1], t2, aggregation_site=3)


def test_estimate_itemsets(t2):
    assert estimate_itemsets(StagePlan.from_stage_maxima([1, 2, 3]), t2) == 6
    # stage maxima that add up to the published totals (minutes as abstract units)
    gfm = StagePlan.from_stage_maxima([400.0, 24.0])
    fdm = StagePlan.from_stage_maxima([80.0] + [57.0, 52.5] * 4)
    assert estimate_itemsets(gfm, t2) == 424.0
    assert len(fdm.stages) == 2 * 4 + 1
    assert estimate_itemsets(fdm, t2) == 518.0
