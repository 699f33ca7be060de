"""Pixel-level mask agreement, total-failure taxonomy and cohort aggregates."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyInput, SlideSetMismatch
from .raster import BinaryMask

METRIC_COLUMNS = ["slide_id", "cohort", "tp", "fp", "fn", "tn", "sensitivity", "precision", "f1"]


@dataclass
class MaskMetrics:
    """Confusion counts of a predicted mask against a reference.

    Ratios with a zero denominator are ``None`` rather than 0.
    """

    slide_id: str
    tp: int
    fp: int
    fn: int
    tn: int
    cohort: str = ""

    @property
    def sensitivity(self) -> float | None:
        d = self.tp + self.fn
        return self.tp / d if d else None

    @property
    def precision(self) -> float | None:
        d = self.tp + self.fp
        return self.tp / d if d else None

    @property
    def f1(self) -> float | None:
        d = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / d if d else None

    def row(self) -> dict:
        def fmt(v):
            return "" if v is None else repr(v)
        return {
            "slide_id": self.slide_id, "cohort": self.cohort,
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "sensitivity": fmt(self.sensitivity), "precision": fmt(self.precision),
            "f1": fmt(self.f1),
        }


def _bits(m) -> np.ndarray:
    return np.asarray(m.bits if isinstance(m, BinaryMask) else m, dtype=bool)


def pixel_confusion(pred, truth, slide_id: str = "", cohort: str = "") -> MaskMetrics:
    """Count tp/fp/fn/tn of ``pred`` against ``truth``."""
    p, t = _bits(pred), _bits(truth)
    if p.shape != t.shape:
        raise DimensionMismatch(f"prediction {p.shape} vs truth {t.shape}")
    if isinstance(pred, BinaryMask) and isinstance(truth, BinaryMask):
        for a, b in ((pred.mpp_x, truth.mpp_x), (pred.mpp_y, truth.mpp_y)):
            if abs(a - b) > 1e-6 * max(a, b):
                raise DimensionMismatch(f"mask resolutions differ: {a} vs {b} um/px")
        slide_id = slide_id or truth.slide_id or pred.slide_id
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = int(p.size - tp - fp - fn)
    return MaskMetrics(slide_id, tp, fp, fn, tn, cohort)


def detect_total_failure(m) -> bool:
    """True when the mask contains no tissue at all."""
    return not _bits(m).any()


@dataclass
class FailureCounts:
    failed_method_a_only: int = 0
    failed_method_b_only: int = 0
    failed_both: int = 0
    total: int = 0


@dataclass
class FailureReport:
    """Per-cohort counts of slides where a detector found no tissue."""

    cohorts: dict[str, FailureCounts] = field(default_factory=dict)
    excluded_slides: list[str] = field(default_factory=list)
    category: dict[str, str] = field(default_factory=dict)

    @property
    def total(self) -> FailureCounts:
        out = FailureCounts()
        for c in self.cohorts.values():
            out.failed_method_a_only += c.failed_method_a_only
            out.failed_method_b_only += c.failed_method_b_only
            out.failed_both += c.failed_both
            out.total += c.total
        return out

    def to_dict(self, label_a: str = "a", label_b: str = "b") -> dict:
        rows = [{"cohort": name, **asdict(c)} for name, c in sorted(self.cohorts.items())]
        return {
            "methods": {"a": label_a, "b": label_b},
            "cohorts": rows,
            "total": asdict(self.total),
            "excluded_slides": list(self.excluded_slides),
            "category": dict(sorted(self.category.items())),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(**kwargs), indent=2)

    def to_table(self, label_a: str = "A", label_b: str = "B") -> str:
        """Plain-text table with one row per cohort and a total row."""
        header = ["Cohort", f"Failure by {label_a} only", f"Failure by {label_b} only",
                  "Failure by both", "Total slides"]
        body = [[name, c.failed_method_a_only, c.failed_method_b_only, c.failed_both, c.total]
                for name, c in sorted(self.cohorts.items())]
        t = self.total

        def pct(n):
            return f"{n} ({100.0 * n / t.total:.2f}%)" if t.total else str(n)

        body.append(["Total", pct(t.failed_method_a_only), pct(t.failed_method_b_only),
                     pct(t.failed_both), t.total])
        cells = [header] + [[str(v) for v in row] for row in body]
        widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
        lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in cells]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def failure_report(masks_a: dict, masks_b: dict, cohorts: dict | None = None) -> FailureReport:
    """Classify every slide as failing under A only, B only, both, or neither.

    ``masks_a`` and ``masks_b`` map slide ids to masks (or directly to a
    boolean "failed" flag). Slides failing either method are listed in
    ``excluded_slides`` so downstream comparisons can drop them.
    """
    if set(masks_a) != set(masks_b):
        only_a = sorted(set(masks_a) - set(masks_b))
        only_b = sorted(set(masks_b) - set(masks_a))
        raise SlideSetMismatch(f"slides only in A: {only_a[:5]}, only in B: {only_b[:5]}")
    cohorts = cohorts or {}
    report = FailureReport()

    def failed(v):
        return bool(v) if isinstance(v, (bool, np.bool_)) else detect_total_failure(v)

    for sid in sorted(masks_a):
        counts = report.cohorts.setdefault(cohorts.get(sid, ""), FailureCounts())
        counts.total += 1
        fa, fb = failed(masks_a[sid]), failed(masks_b[sid])
        if fa and fb:
            counts.failed_both += 1
            report.category[sid] = "both"
        elif fa:
            counts.failed_method_a_only += 1
            report.category[sid] = "a_only"
        elif fb:
            counts.failed_method_b_only += 1
            report.category[sid] = "b_only"
        if fa or fb:
            report.excluded_slides.append(sid)
    return report


@dataclass
class CohortAggregate:
    cohort: str
    metrics: list[MaskMetrics]
    sensitivity_mean: float | None
    sensitivity_ci: tuple[float, float] | None
    precision_mean: float | None
    precision_ci: tuple[float, float] | None
    replicates: int
    excluded_slides: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "cohort": self.cohort,
            "n_slides": len(self.metrics),
            "sensitivity": {"mean": self.sensitivity_mean,
                            "ci": list(self.sensitivity_ci) if self.sensitivity_ci else None},
            "precision": {"mean": self.precision_mean,
                          "ci": list(self.precision_ci) if self.precision_ci else None},
            "replicates": self.replicates,
            "excluded_slides": [{"slide_id": s, "reason": r} for s, r in self.excluded_slides],
        }


def bootstrap_mean_ci(values, replicates: int, rng: np.random.Generator,
                      level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap CI of the mean, resampling values with replacement.

    Draws one ``(replicates, n)`` block of indices from ``rng``.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    idx = rng.integers(0, n, size=(replicates, n))
    means = values[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(means, [100 * alpha, 100 * (1 - alpha)])
    return float(lo), float(hi)


def aggregate_cohort(metrics: list[MaskMetrics], replicates: int = 1000, seed: int = 0,
                     cohort: str = "") -> CohortAggregate:
    """Means and bootstrap CIs of per-slide sensitivity and precision.

    Slides whose ratio is undefined are left out of that ratio's mean and
    CI and reported in ``excluded_slides``. One generator seeded with
    ``seed`` serves sensitivity first, then precision.
    """
    if not metrics:
        raise EmptyInput("no metrics to aggregate")
    rng = np.random.default_rng(seed)
    excluded = []
    summary = {}
    for name in ("sensitivity", "precision"):
        vals = []
        for m in metrics:
            v = getattr(m, name)
            if v is None:
                excluded.append((m.slide_id, f"{name} undefined"))
            else:
                vals.append(v)
        if vals:
            summary[name] = (float(np.mean(vals)), bootstrap_mean_ci(vals, replicates, rng))
        else:
            summary[name] = (None, None)
    return CohortAggregate(
        cohort=cohort or (metrics[0].cohort if metrics else ""),
        metrics=list(metrics),
        sensitivity_mean=summary["sensitivity"][0],
        sensitivity_ci=summary["sensitivity"][1],
        precision_mean=summary["precision"][0],
        precision_ci=summary["precision"][1],
        replicates=replicates,
        excluded_slides=excluded,
    )


def aggregate_by_cohort(metrics: list[MaskMetrics], replicates: int = 1000,
                        seed: int = 0) -> dict[str, CohortAggregate]:
    groups = defaultdict(list)
    for m in metrics:
        groups[m.cohort].append(m)
    return {c: aggregate_cohort(ms, replicates, seed, c) for c, ms in sorted(groups.items())}


def write_metrics_csv(path, metrics: list[MaskMetrics], header_lines=()) -> None:
    """``slide_id,cohort,tp,fp,fn,tn,sensitivity,precision,f1``; undefined ratios are empty."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for m in sorted(metrics, key=lambda m: m.slide_id):
            writer.writerow(m.row())


def read_metrics_csv(path) -> list[MaskMetrics]:
    with open(path, newline="") as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        return [MaskMetrics(r["slide_id"], int(r["tp"]), int(r["fp"]), int(r["fn"]),
                            int(r["tn"]), r["cohort"]) for r in rows]
