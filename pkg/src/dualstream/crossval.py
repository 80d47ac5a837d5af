"""k-fold orchestration over the training loop."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .data import LabeledCorpus, stratified_kfold
from .imageproc.transforms import compute_normalization_stats, normalize
from .metrics import MetricsReport, evaluate_predictions
from .model.config import TrainConfig
from .model.fusion import FusionModel
from .model.training import predict, train

FOLD_METRICS = ("accuracy", "weighted_precision", "weighted_recall", "weighted_f1", "kappa")


def _scalars(report: MetricsReport) -> dict[str, float]:
    m = report.metrics
    return {
        "accuracy": m.accuracy,
        "weighted_precision": m.weighted["precision"],
        "weighted_recall": m.weighted["recall"],
        "weighted_f1": m.weighted["f1"],
        "kappa": report.kappa,
    }


@dataclass
class CrossValReport:
    folds: list[MetricsReport]
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def values(self, metric: str) -> list[float]:
        return [_scalars(r)[metric] for r in self.folds]

    def mean(self, metric: str) -> float:
        v = self.values(metric)
        return math.fsum(v) / len(v)

    def std(self, metric: str) -> float:
        """Sample standard deviation (n - 1 denominator) over the folds."""
        v = self.values(metric)
        return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "folds": [_scalars(r) for r in self.folds],
            "mean": {m: self.mean(m) for m in FOLD_METRICS},
            "std": {m: self.std(m) for m in FOLD_METRICS},
        }

    def write(self, out_dir, header_comment: Optional[str] = None, extra: Optional[dict] = None) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        doc = dict(extra or {})
        doc.update(self.to_dict())
        json_path, csv_path = out_dir / "crossval.json", out_dir / "crossval.csv"
        json_path.write_text(json.dumps(doc, indent=2, sort_keys=True))
        with open(csv_path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["fold", *FOLD_METRICS])
            for i, row in enumerate(doc["folds"]):
                w.writerow([i, *[repr(row[m]) for m in FOLD_METRICS]])
            w.writerow(["mean", *[repr(doc["mean"][m]) for m in FOLD_METRICS]])
            w.writerow(["std", *[repr(doc["std"][m]) for m in FOLD_METRICS]])
        return [json_path, csv_path]


def crossval_run(
    corpus: LabeledCorpus,
    model_builder: Callable[[int], FusionModel],
    train_config: TrainConfig,
    k: int = 5,
    seed: int = 0,
    bootstrap_resamples: int = 1000,
    level: float = 0.95,
) -> CrossValReport:
    """Train one model per stratified fold and evaluate it on that fold.

    ``model_builder(i)`` returns a fresh model for fold i.  Normalisation
    statistics come from each fold's training ids only.  The held-out fold
    also feeds the per-epoch validation figures; nothing is selected on
    them.  Fold seeds are fixed before any training starts.
    """
    splits = stratified_kfold(corpus, k, seed)
    fold_seeds = [seed * 1000 + i for i in range(k)]
    reports = []
    for i, split in enumerate(splits):
        x_tr, y_tr = corpus.arrays(split["train"])
        x_te, y_te = corpus.arrays(split["test"])
        stats = compute_normalization_stats(list(x_tr))
        x_tr = normalize(x_tr, stats)[:, None]
        x_te = normalize(x_te, stats)[:, None]
        model = model_builder(i)
        train(model, (x_tr, y_tr), (x_te, y_te), dataclasses.replace(train_config, seed=fold_seeds[i], checkpoint_dir=None))
        pred = predict(model, x_te)
        reports.append(evaluate_predictions(pred.scores, y_te, corpus.class_names, bootstrap_resamples,
                                            fold_seeds[i], level))
    return CrossValReport(reports, seed)
