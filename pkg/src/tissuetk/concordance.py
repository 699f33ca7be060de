"""Grade concordance between two tissue-detection routes.

Predicted and reference ISUP grades (0 = benign, 1 to 5) come in as a
CSV with columns ``slide_id,group_id,cohort,truth_isup,pred_isup_a,pred_isup_b``.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyInput, ParseError

N_GRADES = 6
PREDICTION_COLUMNS = ["slide_id", "group_id", "cohort", "truth_isup", "pred_isup_a", "pred_isup_b"]


def _grade(v) -> int:
    g = int(v)
    if not 0 <= g < N_GRADES:
        raise ValueError(f"ISUP grade {v!r} outside 0-5")
    return g


@dataclass(frozen=True)
class PredictionRow:
    slide_id: str
    group_id: str
    cohort: str
    truth: int
    pred_a: int
    pred_b: int

    def pred(self, which: str) -> int:
        return self.pred_a if which == "a" else self.pred_b


@dataclass
class PredictionSet:
    rows: list[PredictionRow] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for r in self.rows:
            if r.slide_id in seen:
                raise ValueError(f"duplicate slide_id {r.slide_id!r}")
            seen.add(r.slide_id)
            for g in (r.truth, r.pred_a, r.pred_b):
                _grade(g)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def cohorts(self) -> list[str]:
        return sorted({r.cohort for r in self.rows})

    def subset(self, cohort: str | None = None, exclude=()) -> "PredictionSet":
        exclude = set(exclude)
        return PredictionSet([r for r in self.rows
                              if (cohort is None or r.cohort == cohort)
                              and r.slide_id not in exclude])


def read_predictions(path) -> PredictionSet:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        missing = set(PREDICTION_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ParseError(f"{path}: missing columns {sorted(missing)}")
        for lineno, r in enumerate(reader, 2):
            try:
                rows.append(PredictionRow(
                    slide_id=r["slide_id"],
                    group_id=r["group_id"] or r["slide_id"],
                    cohort=r["cohort"],
                    truth=_grade(r["truth_isup"]),
                    pred_a=_grade(r["pred_isup_a"]),
                    pred_b=_grade(r["pred_isup_b"]),
                ))
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    try:
        return PredictionSet(rows)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def write_predictions(path, ps: PredictionSet, header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_COLUMNS)
        for r in ps:
            w.writerow([r.slide_id, r.group_id, r.cohort, r.truth, r.pred_a, r.pred_b])


def quadratic_weights(n: int) -> np.ndarray:
    i = np.arange(n)
    return (i[:, None] - i[None, :]) ** 2 / (n - 1) ** 2


def confusion(truth, pred, n_categories: int = N_GRADES) -> np.ndarray:
    truth = np.asarray(truth, dtype=np.intp)
    pred = np.asarray(pred, dtype=np.intp)
    return np.bincount(truth * n_categories + pred,
                       minlength=n_categories * n_categories).reshape(n_categories, n_categories)


def kappa_from_confusion(counts: np.ndarray) -> float:
    """Quadratic weighted kappa of a confusion matrix of counts."""
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.shape[0]
    observed = counts / counts.sum()
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0))
    w = quadratic_weights(n)
    num = float((w * observed).sum())
    den = float((w * expected).sum())
    if den == 0.0:
        # zero expected disagreement forces zero observed disagreement
        return 1.0
    return 1.0 - num / den


def qwk(truth, pred, n_categories: int = N_GRADES) -> float:
    """Quadratic weighted Cohen's kappa between two label sequences.

    Weights are ``(i - j)**2 / (n - 1)**2``; a degenerate case with no
    expected disagreement (one shared label throughout) returns 1.0.
    """
    truth = list(truth)
    pred = list(pred)
    if len(truth) != len(pred):
        raise DimensionMismatch(f"{len(truth)} reference vs {len(pred)} predicted labels")
    if not truth:
        raise EmptyInput("no labels")
    for g in truth + pred:
        if not 0 <= int(g) < n_categories:
            raise ValueError(f"label {g} outside 0..{n_categories - 1}")
    return kappa_from_confusion(confusion(truth, pred, n_categories))


@dataclass
class KappaResult:
    kappa: float
    ci_low: float
    ci_high: float
    n_cases: int
    replicates: int

    def to_dict(self) -> dict:
        return asdict(self)


def bootstrap_kappa(ps: PredictionSet, which: str = "a", replicates: int = 1000,
                    seed: int = 0, level: float = 0.95) -> KappaResult:
    """Kappa of one prediction route with a percentile bootstrap CI.

    Cases are resampled by ``group_id`` (all rows of a drawn group come
    along). Group order is first appearance; one ``(replicates, n_groups)``
    block of indices is drawn from ``numpy.random.default_rng(seed)``.
    """
    if which not in ("a", "b"):
        raise ValueError("which must be 'a' or 'b'")
    if len(ps) == 0:
        raise EmptyInput("empty prediction set")
    groups: dict[str, int] = {}
    per_group = []
    for r in ps:
        g = groups.setdefault(r.group_id, len(groups))
        if g == len(per_group):
            per_group.append(np.zeros((N_GRADES, N_GRADES), dtype=np.int64))
        per_group[g][r.truth, r.pred(which)] += 1
    per_group = np.stack(per_group)
    n_groups = len(per_group)

    point = kappa_from_confusion(per_group.sum(axis=0))
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n_groups, size=(replicates, n_groups))
    kappas = np.empty(replicates)
    for b in range(replicates):
        weights = np.bincount(idx[b], minlength=n_groups)
        kappas[b] = kappa_from_confusion(np.tensordot(weights, per_group, axes=1))
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(kappas, [100 * alpha, 100 * (1 - alpha)])
    return KappaResult(point, float(lo), float(hi), len(ps), replicates)


def reduce_max(values: list[int]) -> int:
    return max(values)


def pool_predictions(ps: PredictionSet, reducer=reduce_max) -> PredictionSet:
    """Collapse rows sharing a ``group_id`` into one row per group.

    Truth and both predictions are reduced independently (default: highest
    grade). Single-row groups pass through unchanged; pooled rows take the
    group id as their ``slide_id``. Groups keep first-appearance order.
    """
    order: dict[str, list[PredictionRow]] = {}
    for r in ps:
        order.setdefault(r.group_id, []).append(r)
    out = []
    for gid, rows in order.items():
        if len(rows) == 1:
            out.append(rows[0])
            continue
        out.append(PredictionRow(
            slide_id=gid, group_id=gid, cohort=rows[0].cohort,
            truth=_grade(reducer([r.truth for r in rows])),
            pred_a=_grade(reducer([r.pred_a for r in rows])),
            pred_b=_grade(reducer([r.pred_b for r in rows])),
        ))
    return PredictionSet(out)


def majority_vote(votes, tie: str = "high") -> int:
    """Most frequent grade; ties go to the higher grade unless ``tie="low"``."""
    votes = [int(v) for v in votes]
    if not votes:
        raise EmptyInput("no votes")
    counts = Counter(votes)
    top = max(counts.values())
    winners = [g for g, c in counts.items() if c == top]
    return max(winners) if tie == "high" else min(winners)


@dataclass
class DiscordanceReport:
    rows: list[PredictionRow]
    n_total: int
    n_discordant: int
    n_malignant: int
    n_discordant_malignant: int

    @property
    def fraction(self) -> float | None:
        return self.n_discordant / self.n_total if self.n_total else None

    @property
    def fraction_malignant(self) -> float | None:
        return self.n_discordant_malignant / self.n_malignant if self.n_malignant else None

    def summary(self) -> str:
        def pct(a, b):
            return f"{a}/{b} ({100.0 * a / b:.1f}%)" if b else f"{a}/{b}"
        return (f"discordant: {pct(self.n_discordant, self.n_total)} overall, "
                f"{pct(self.n_discordant_malignant, self.n_malignant)} malignant")

    def write_csv(self, path, header_lines=()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["slide_id", "group_id", "cohort", "truth_isup", "pred_isup_a", "pred_isup_b"])
            for r in self.rows:
                w.writerow([r.slide_id, r.group_id, r.cohort, r.truth, r.pred_a, r.pred_b])


def discordance_report(ps: PredictionSet) -> DiscordanceReport:
    """Cases where the two routes predict different grades."""
    rows = [r for r in ps if r.pred_a != r.pred_b]
    return DiscordanceReport(
        rows=rows,
        n_total=len(ps),
        n_discordant=len(rows),
        n_malignant=sum(1 for r in ps if r.truth >= 1),
        n_discordant_malignant=sum(1 for r in rows if r.truth >= 1),
    )


def cohort_kappas(ps: PredictionSet, exclude=(), replicates: int = 1000, seed: int = 0,
                  pool: bool = True) -> dict[str, dict[str, KappaResult]]:
    """Per-cohort (and overall ``"all"``) kappa for both routes.

    Slides in ``exclude`` are dropped before pooling and before kappa.
    """
    kept = ps.subset(exclude=exclude)
    out = {}
    for cohort in kept.cohorts() + ["all"]:
        sub = kept if cohort == "all" else kept.subset(cohort)
        if pool:
            sub = pool_predictions(sub)
        if len(sub) == 0:
            continue
        out[cohort] = {w: bootstrap_kappa(sub, w, replicates, seed) for w in ("a", "b")}
    return out


__all__ = [
    "PredictionRow", "PredictionSet", "KappaResult", "DiscordanceReport",
    "qwk", "bootstrap_kappa", "pool_predictions", "majority_vote", "discordance_report",
    "cohort_kappas", "read_predictions", "write_predictions",
]
