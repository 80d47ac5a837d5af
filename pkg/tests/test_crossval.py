import dataclasses
import json

import numpy as np
import pytest

from dualstream.config import synthetic_preset
from dualstream.crossval import FOLD_METRICS, crossval_run
from dualstream.data import LabeledCorpus
from dualstream.gradsuite import mini_model_config
from dualstream.model import FusionModel, TrainConfig
from dualstream.sample import ImageSample
from dualstream.synthetic import make_quadrant_blobs


def corpus_from(images, labels) -> LabeledCorpus:
    return LabeledCorpus.from_samples(ImageSample(f"s{i:03d}", int(y), pixels=im) for i, (im, y) in enumerate(zip(images, labels)))


@pytest.fixture(scope="module")
def tiny_report():
    images, labels = make_quadrant_blobs(6, 16, seed=1)
    cfg = TrainConfig(epochs=2, batch_size=4)
    return crossval_run(corpus_from(images, labels), lambda i: FusionModel(mini_model_config(i)), cfg, k=3, seed=2,
                        bootstrap_resamples=100)


def test_report_shape_and_sample_std(tiny_report):
    assert tiny_report.k == 3 and tiny_report.seed == 2
    acc = tiny_report.values("accuracy")
    assert len(acc) == 3 and all(0 <= a <= 1 for a in acc)
    assert tiny_report.mean("accuracy") == pytest.approx(np.mean(acc))
    assert tiny_report.std("accuracy") == pytest.approx(np.std(acc, ddof=1))
    assert set(tiny_report.to_dict()["mean"]) == set(FOLD_METRICS)
    assert sum(r.n for r in tiny_report.folds) == 24


def test_report_files(tiny_report, tmp_path):
    json_path, csv_path = tiny_report.write(tmp_path, "config_hash=h seed=2", {"config_hash": "h"})
    doc = json.loads(json_path.read_text())
    assert doc["config_hash"] == "h" and doc["k"] == 3 and len(doc["folds"]) == 3
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "# config_hash=h seed=2"
    assert lines[1].split(",") == ["fold", *FOLD_METRICS]
    assert [ln.split(",")[0] for ln in lines[2:]] == ["0", "1", "2", "mean", "std"]


def test_crossval_is_deterministic(tiny_report):
    images, labels = make_quadrant_blobs(6, 16, seed=1)
    again = crossval_run(corpus_from(images, labels), lambda i: FusionModel(mini_model_config(i)),
                         TrainConfig(epochs=2, batch_size=4), k=3, seed=2, bootstrap_resamples=100)
    assert again.to_dict() == tiny_report.to_dict()


def test_two_fold_synthetic_accuracy():
    """k=2 on the 200-image quadrant corpus: both folds reach 0.9 accuracy."""
    preset = synthetic_preset()
    images, labels = make_quadrant_blobs(50, 64, seed=0)
    report = crossval_run(corpus_from(images, labels), lambda i: FusionModel(dataclasses.replace(preset.model, seed=i)),
                          preset.train, k=2, seed=0)
    assert all(a >= 0.9 for a in report.values("accuracy")), report.values("accuracy")
