"""Confusion matrix, derived rates, kappa, ROC/PR AUC and bootstrap intervals."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError


@dataclass
class ConfusionMatrix:
    """Counts with rows = actual class, columns = predicted class."""

    counts: np.ndarray
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = self.counts.shape[0]
        if self.counts.ndim != 2 or self.counts.shape[1] != k:
            raise ValueError("confusion matrix must be square")
        if (self.counts < 0).any():
            raise ValueError("confusion matrix entries must be non-negative")
        if not self.class_names:
            self.class_names = tuple(str(i) for i in range(k))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def write_csv(self, path, header_comment: Optional[str] = None) -> None:
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["actual\\predicted", *self.class_names])
            for name, row in zip(self.class_names, self.counts):
                w.writerow([name, *row.tolist()])


def confusion_matrix(predicted, actual, k: int, class_names: Sequence[str] = ()) -> ConfusionMatrix:
    predicted = np.asarray(predicted, dtype=np.int64)
    actual = np.asarray(actual, dtype=np.int64)
    if predicted.size == 0:
        raise DataError("confusion_matrix: no predictions")
    if predicted.shape != actual.shape:
        raise DataError("predicted and actual labels differ in length")
    if min(predicted.min(), actual.min()) < 0 or max(predicted.max(), actual.max()) >= k:
        raise DataError(f"labels must lie in [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (actual, predicted), 1)
    return ConfusionMatrix(counts, tuple(class_names))


def _safe_divide(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """num/den with 0 where den is 0; also returns the mask of those cells."""
    undefined = den == 0
    out = np.divide(num, den, out=np.zeros(num.shape, dtype=np.float64), where=~undefined)
    return out, undefined


@dataclass
class ClassificationMetrics:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    macro: dict[str, float]
    weighted: dict[str, float]
    # (metric, class index) pairs that were undefined and reported as 0
    zero_division: list[tuple[str, int]] = field(default_factory=list)


def classification_metrics(cm: ConfusionMatrix) -> ClassificationMetrics:
    """Per-class precision/recall/F1 with macro and support-weighted averages."""
    c = cm.counts.astype(np.float64)
    if c.sum() == 0:
        raise DataError("classification_metrics: empty confusion matrix")
    diag = np.diag(c)
    support = c.sum(axis=1)
    precision, p_undef = _safe_divide(diag, c.sum(axis=0))
    recall, r_undef = _safe_divide(diag, support)
    f1, f_undef = _safe_divide(2 * precision * recall, precision + recall)
    flags = [("precision", int(i)) for i in np.flatnonzero(p_undef)]
    flags += [("recall", int(i)) for i in np.flatnonzero(r_undef)]
    flags += [("f1", int(i)) for i in np.flatnonzero(f_undef)]
    w = support / support.sum()
    macro = {"precision": float(precision.mean()), "recall": float(recall.mean()), "f1": float(f1.mean())}
    weighted = {"precision": float(w @ precision), "recall": float(w @ recall), "f1": float(w @ f1)}
    return ClassificationMetrics(float(diag.sum() / c.sum()), precision, recall, f1, support.astype(np.int64),
                                 macro, weighted, flags)


def cohens_kappa(cm: ConfusionMatrix) -> float:
    """(p_o - p_e) / (1 - p_e) with p_e from the row and column marginals."""
    c = cm.counts.astype(np.float64)
    n = c.sum()
    if n == 0:
        raise DataError("cohens_kappa: empty confusion matrix")
    p_o = np.trace(c) / n
    p_e = float(c.sum(axis=1) @ c.sum(axis=0)) / (n * n)
    if p_e == 1.0:
        raise DataError("cohens_kappa: chance agreement is 1, kappa is undefined")
    return float((p_o - p_e) / (1 - p_e))


# -- ranking metrics -------------------------------------------------------------


def _binary(scores, positive) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    if scores.shape != positive.shape or scores.ndim != 1:
        raise DataError("scores and labels must be 1-D and equally long")
    if not np.isfinite(scores).all():
        raise DataError("scores must be finite")
    return scores, positive


def _threshold_counts(scores: np.ndarray, positive: np.ndarray):
    """Cumulative (tp, fp) at each distinct score, highest first; ties form one step."""
    order = np.argsort(-scores, kind="mergesort")
    s, p = scores[order], positive[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(p)[last]
    fp = np.cumsum(~p)[last]
    return s[last], tp, fp


def roc_curve(scores, positive):
    """(fpr, tpr, thresholds) from the origin, one point per distinct score."""
    scores, positive = _binary(scores, positive)
    n_pos, n_neg = int(positive.sum()), int((~positive).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC needs at least one positive and one negative sample")
    thr, tp, fp = _threshold_counts(scores, positive)
    return np.r_[0.0, fp / n_neg], np.r_[0.0, tp / n_pos], np.r_[np.inf, thr]


def roc_auc(scores, positive) -> float:
    """Trapezoidal area under the tie-grouped ROC curve."""
    fpr, tpr, _ = roc_curve(scores, positive)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))


def pairwise_auc(scores, positive) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), by exhaustive comparison."""
    scores, positive = _binary(scores, positive)
    pos, neg = scores[positive], scores[~positive]
    if pos.size == 0 or neg.size == 0:
        raise DataError("AUC needs at least one positive and one negative sample")
    d = pos[:, None] - neg[None, :]
    return float(((d > 0).sum() + 0.5 * (d == 0).sum()) / d.size)


def pr_curve(scores, positive):
    """(precision, recall, thresholds), one point per distinct score, highest first."""
    scores, positive = _binary(scores, positive)
    n_pos = int(positive.sum())
    if n_pos == 0:
        raise DataError("precision-recall is undefined for a class with no positive samples")
    thr, tp, fp = _threshold_counts(scores, positive)
    return tp / (tp + fp), tp / n_pos, thr


def average_precision(scores, positive) -> float:
    """Step-wise PR area: sum over thresholds of (R_n - R_{n-1}) * P_n, with R_0 = 0."""
    precision, recall, _ = pr_curve(scores, positive)
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def _ovr(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise DataError("scores must be (N, K) with one row per label")
    return scores, labels


def roc_auc_ovr(scores, labels) -> np.ndarray:
    """One-vs-rest ROC AUC per class."""
    scores, labels = _ovr(scores, labels)
    return np.array([roc_auc(scores[:, c], labels == c) for c in range(scores.shape[1])])


def pr_auc_ovr(scores, labels) -> np.ndarray:
    """One-vs-rest step-wise PR AUC (average precision) per class."""
    scores, labels = _ovr(scores, labels)
    return np.array([average_precision(scores[:, c], labels == c) for c in range(scores.shape[1])])


# -- bootstrap -------------------------------------------------------------------


@dataclass
class BootstrapResult:
    mean: float
    lower: float
    upper: float
    resamples: int
    level: float
    seed: int


def bootstrap_ci(predicted, actual, B: int = 1000, seed: int = 0, level: float = 0.95) -> BootstrapResult:
    """Percentile interval of accuracy over ``B`` resamples of the prediction pairs."""
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if B < 100:
        raise DataError("bootstrap needs B >= 100 resamples")
    if not 0 < level < 1:
        raise DataError("level must lie in (0, 1)")
    if predicted.size == 0 or predicted.shape != actual.shape:
        raise DataError("bootstrap needs equally long, non-empty label arrays")
    correct = (predicted == actual).astype(np.float64)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, correct.size, size=(B, correct.size))
    accs = correct[idx].mean(axis=1)
    tail = 100 * (1 - level) / 2
    lower, upper = np.percentile(accs, [tail, 100 - tail])
    return BootstrapResult(float(accs.mean()), float(lower), float(upper), B, level, seed)


# -- reports ---------------------------------------------------------------------


@dataclass
class MetricsReport:
    class_names: tuple[str, ...]
    confusion: ConfusionMatrix
    metrics: ClassificationMetrics
    kappa: float
    roc_auc: Optional[np.ndarray]
    pr_auc: Optional[np.ndarray]
    bootstrap: BootstrapResult
    n: int
    seed: int

    def to_dict(self) -> dict:
        m = self.metrics
        per_class = {}
        for i, name in enumerate(self.class_names):
            per_class[name] = {
                "precision": float(m.precision[i]),
                "recall": float(m.recall[i]),
                "f1": float(m.f1[i]),
                "support": int(m.support[i]),
            }
            if self.roc_auc is not None:
                per_class[name]["roc_auc"] = float(self.roc_auc[i])
                per_class[name]["pr_auc"] = float(self.pr_auc[i])
        return {
            "accuracy": m.accuracy,
            "per_class": per_class,
            "macro": m.macro,
            "weighted": m.weighted,
            "kappa": self.kappa,
            "zero_division": [list(f) for f in m.zero_division],
            "bootstrap": {
                "mean": self.bootstrap.mean,
                "lower": self.bootstrap.lower,
                "upper": self.bootstrap.upper,
                "resamples": self.bootstrap.resamples,
                "level": self.bootstrap.level,
            },
            "confusion_matrix": self.confusion.counts.tolist(),
            "class_names": list(self.class_names),
            "n": self.n,
            "seed": self.seed,
        }

    def scalar_rows(self) -> list[tuple[str, float]]:
        d = self.to_dict()
        rows = [("accuracy", d["accuracy"]), ("kappa", d["kappa"])]
        rows += [(f"macro_{k}", v) for k, v in d["macro"].items()]
        rows += [(f"weighted_{k}", v) for k, v in d["weighted"].items()]
        for name, vals in d["per_class"].items():
            rows += [(f"{name}_{k}", v) for k, v in vals.items()]
        rows += [(f"bootstrap_{k}", v) for k, v in d["bootstrap"].items()]
        return rows

    def write(self, out_dir, stem: str = "metrics", header_comment: Optional[str] = None,
              extra: Optional[dict] = None, scores=None, labels=None) -> list[Path]:
        """Write JSON + CSV report, confusion CSV and (with scores) ROC/PR curve CSVs."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        doc = dict(extra or {})
        doc.update(self.to_dict())
        written = [out_dir / f"{stem}.json", out_dir / f"{stem}.csv", out_dir / "confusion.csv"]
        written[0].write_text(json.dumps(doc, indent=2, sort_keys=True))
        with open(written[1], "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            for k, v in self.scalar_rows():
                w.writerow([k, repr(float(v))])
        self.confusion.write_csv(written[2], header_comment)
        if scores is not None:
            written += write_curve_csvs(out_dir, scores, labels, self.class_names, header_comment)
        return written


def evaluate_predictions(scores, labels, class_names: Sequence[str], B: int = 1000, seed: int = 0,
                         level: float = 0.95) -> MetricsReport:
    """Full report from (N, K) class scores and true labels; argmax ties go to the lower index."""
    scores, labels = _ovr(scores, labels)
    k = scores.shape[1]
    predicted = scores.argmax(axis=1)
    cm = confusion_matrix(predicted, labels, k, class_names)
    present = np.bincount(labels, minlength=k)
    if (present > 0).all() and (present < labels.size).all():
        roc, pr = roc_auc_ovr(scores, labels), pr_auc_ovr(scores, labels)
    else:
        roc = pr = None  # some class has no positives (or no negatives); AUCs are undefined
    return MetricsReport(tuple(class_names), cm, classification_metrics(cm), cohens_kappa(cm), roc, pr,
                         bootstrap_ci(predicted, labels, B, seed, level), int(labels.size), seed)


def write_curve_csvs(out_dir, scores, labels, class_names, header_comment: Optional[str] = None) -> list[Path]:
    """Per-class ``roc_<name>.csv`` (fpr, tpr, threshold) and ``pr_<name>.csv``."""
    scores, labels = _ovr(scores, labels)
    out_dir = Path(out_dir)
    paths = []
    for c, name in enumerate(class_names):
        pos = labels == c
        if not pos.any() or pos.all():
            continue
        fpr, tpr, thr = roc_curve(scores[:, c], pos)
        prec, rec, pthr = pr_curve(scores[:, c], pos)
        for kind, cols, rows in (
            ("roc", ("fpr", "tpr", "threshold"), zip(fpr, tpr, thr)),
            ("pr", ("precision", "recall", "threshold"), zip(prec, rec, pthr)),
        ):
            path = out_dir / f"{kind}_{name}.csv"
            with open(path, "w", newline="") as fh:
                if header_comment:
                    fh.write(f"# {header_comment}\n")
                w = csv.writer(fh)
                w.writerow(cols)
                for row in rows:
                    w.writerow([repr(float(v)) for v in row])
            paths.append(path)
    return paths


# -- prediction files --------------------------------------------------------------


def write_predictions_csv(path, sample_ids, labels, scores, header_comment: Optional[str] = None) -> None:
    scores = np.asarray(scores, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["sample_id", "actual", *[f"score_{i}" for i in range(scores.shape[1])]])
        for sid, y, row in zip(sample_ids, labels, scores):
            w.writerow([sid, int(y), *[repr(float(v)) for v in row]])


def read_predictions_csv(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    """(sample ids, actual labels, (N, K) scores); ``#`` lines are comments."""
    path = Path(path)
    try:
        lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    except FileNotFoundError:
        raise DataError(f"{path}: predictions file not found") from None
    rows = list(csv.reader(lines))
    if not rows:
        raise DataError(f"{path}: empty predictions file")
    header = rows[0]
    k = len(header) - 2
    if header[:2] != ["sample_id", "actual"] or k < 1 or header[2:] != [f"score_{i}" for i in range(k)]:
        raise DataError(f"{path}: expected columns sample_id, actual, score_0..score_K-1")
    ids, labels, scores = [], [], []
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != k + 2:
            raise DataError(f"{path}: row {n} has {len(row)} fields, expected {k + 2}")
        try:
            labels.append(int(row[1]))
            scores.append([float(v) for v in row[2:]])
        except ValueError:
            raise DataError(f"{path}: row {n} is not numeric") from None
        ids.append(row[0])
    if not ids:
        raise DataError(f"{path}: no prediction rows")
    return ids, np.array(labels, dtype=np.int64), np.array(scores)
