import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from tissuetk.errors import DimensionMismatch, EmptyInput, SlideSetMismatch
from tissuetk.metrics import (MaskMetrics, aggregate_by_cohort, aggregate_cohort,
                              detect_total_failure, failure_report, pixel_confusion,
                              read_metrics_csv, write_metrics_csv)
from tissuetk.raster import BinaryMask


def test_confusion_examples():
    t = np.zeros((8, 8), bool)
    t[2:5, 2:5] = True
    m = pixel_confusion(t, t)
    assert (m.sensitivity, m.precision, m.f1) == (1.0, 1.0, 1.0)
    m = pixel_confusion(np.zeros_like(t), t)
    assert m.sensitivity == 0.0 and m.precision is None
    top = np.zeros((10, 10), bool)
    top[:5] = True
    left = np.zeros((10, 10), bool)
    left[:, :5] = True
    m = pixel_confusion(left, top)
    assert (m.sensitivity, m.precision) == (0.5, 0.5)


@settings(max_examples=100)
@given(arrays(np.bool_, (6, 7)), arrays(np.bool_, (6, 7)))
def test_confusion_partitions_pixels(p, t):
    m = pixel_confusion(p, t)
    assert m.tp + m.fp + m.fn + m.tn == 42
    for v in (m.sensitivity, m.precision, m.f1):
        assert v is None or 0.0 <= v <= 1.0


def test_confusion_mismatch():
    with pytest.raises(DimensionMismatch):
        pixel_confusion(np.zeros((2, 3), bool), np.zeros((3, 2), bool))
    with pytest.raises(DimensionMismatch):
        pixel_confusion(BinaryMask(np.zeros((2, 2), bool), 8.0, 8.0),
                        BinaryMask(np.zeros((2, 2), bool), 4.0, 4.0))


def test_total_failure():
    assert detect_total_failure(np.zeros((3, 3), bool))
    one = np.zeros((3, 3), bool)
    one[1, 1] = True
    assert not detect_total_failure(one)


def test_failure_report_examples():
    ok = np.ones((2, 2), bool)
    none = np.zeros((2, 2), bool)
    rep = failure_report({"a": ok, "b": ok}, {"a": ok, "b": ok})
    assert rep.total.failed_method_a_only == rep.total.failed_method_b_only == 0
    rep = failure_report({"a": none, "b": ok}, {"a": ok, "b": ok})
    assert rep.total.failed_method_a_only == 1 and rep.excluded_slides == ["a"]
    with pytest.raises(SlideSetMismatch):
        failure_report({"a": ok}, {"b": ok})


def test_failure_report_planted_corpus():
    fail_a = {f"s{i:02d}": False for i in range(20)}
    fail_b = dict(fail_a)
    for i in (1, 4, 7):
        fail_a[f"s{i:02d}"] = True
    for i in (10, 13):
        fail_b[f"s{i:02d}"] = True
    fail_a["s19"] = fail_b["s19"] = True
    cohorts = {sid: "c1" if int(sid[1:]) < 10 else "c2" for sid in fail_a}
    rep = failure_report(fail_a, fail_b, cohorts)
    t = rep.total
    assert (t.failed_method_a_only, t.failed_method_b_only, t.failed_both, t.total) == (3, 2, 1, 20)
    assert rep.cohorts["c1"].failed_method_a_only == 3
    d = rep.to_dict("thr", "ai")
    assert d["methods"] == {"a": "thr", "b": "ai"}
    table = rep.to_table("thr", "ai")
    assert "Failure by thr only" in table and "3 (15.00%)" in table


def test_aggregate_examples():
    single = [MaskMetrics("s", 8, 2, 2, 10)]
    agg = aggregate_cohort(single, replicates=100, seed=0)
    assert agg.sensitivity_ci == (0.8, 0.8)
    same = [MaskMetrics(f"s{i}", 3, 1, 1, 5) for i in range(10)]
    agg = aggregate_cohort(same, replicates=100, seed=0)
    lo, hi = agg.sensitivity_ci
    assert abs(lo - 0.75) < 1e-15 and abs(hi - 0.75) < 1e-15
    with pytest.raises(EmptyInput):
        aggregate_cohort([])


def test_aggregate_matches_loop_oracle():
    rng = np.random.default_rng(0)
    ms = [MaskMetrics(f"s{i}", int(tp), int(fp), int(fn), 0)
          for i, (tp, fp, fn) in enumerate(rng.integers(1, 100, (50, 3)))]
    agg = aggregate_cohort(ms, replicates=500, seed=42)
    orng = np.random.default_rng(42)
    sens = oracles.bootstrap_mean_loop([m.sensitivity for m in ms], 500, orng)
    prec = oracles.bootstrap_mean_loop([m.precision for m in ms], 500, orng)
    assert np.allclose(agg.sensitivity_ci, sens, rtol=0, atol=1e-12)
    assert np.allclose(agg.precision_ci, prec, rtol=0, atol=1e-12)
    assert agg.sensitivity_ci[0] <= agg.sensitivity_mean <= agg.sensitivity_ci[1]


def test_aggregate_excludes_undefined():
    ms = [MaskMetrics("a", 5, 0, 5, 0), MaskMetrics("b", 0, 0, 0, 9)]
    agg = aggregate_cohort(ms, replicates=10)
    assert agg.sensitivity_mean == 0.5
    assert ("b", "sensitivity undefined") in agg.excluded_slides
    assert ("b", "precision undefined") in agg.excluded_slides
    by = aggregate_by_cohort([MaskMetrics("x", 1, 0, 0, 0, "k")], replicates=5)
    assert list(by) == ["k"]


def test_metrics_csv_round_trip(tmp_path):
    ms = [MaskMetrics("b", 1, 2, 3, 4, "c"), MaskMetrics("a", 0, 0, 0, 4, "c")]
    write_metrics_csv(tmp_path / "m.csv", ms, ["tool=x"])
    text = (tmp_path / "m.csv").read_text()
    assert text.startswith("# tool=x\n")
    assert "a,c,0,0,0,4,,," in text
    back = read_metrics_csv(tmp_path / "m.csv")
    assert [m.slide_id for m in back] == ["a", "b"] and back[1] == ms[0]
