"""Train the dual-stream model on the synthetic corpus and look at Grad-CAM.

200 images (50 per class, 64x64) are split 80/10/10.  After 30 epochs the
script reports accuracy and, for each correctly classified test image, the
share of heatmap mass that lands in the class's quadrant on each stream.
A few overlays go to demos_out/explain/.  Takes about a minute on one core.
Run: python demos/train_and_explain.py [seed]
"""
import dataclasses
import sys
from pathlib import Path

import numpy as np

from dualstream.config import synthetic_preset
from dualstream.data import LabeledCorpus, split_80_10_10
from dualstream.gradcam import gradcam, write_explanations
from dualstream.imageproc.transforms import compute_normalization_stats, normalize
from dualstream.model import FusionModel, predict, train
from dualstream.sample import ImageSample
from dualstream.synthetic import make_quadrant_blobs, quadrant_mass


def main(seed=0, out=Path("demos_out/explain")):
    images, labels = make_quadrant_blobs(50, 64, seed)
    corpus = LabeledCorpus.from_samples(
        ImageSample(f"s{i:03d}", int(y), pixels=im) for i, (im, y) in enumerate(zip(images, labels)))
    split = split_80_10_10(corpus, seed)
    (x_tr, y_tr), (x_va, y_va), (x_te, y_te) = (corpus.arrays(split[p]) for p in ("train", "validation", "test"))
    raw_test = x_te
    stats = compute_normalization_stats(list(x_tr))
    x_tr, x_va, x_te = (normalize(x, stats)[:, None] for x in (x_tr, x_va, x_te))

    preset = synthetic_preset()
    model = FusionModel(dataclasses.replace(preset.model, seed=seed))
    cfg = dataclasses.replace(preset.train, seed=seed)
    for rec in train(model, (x_tr, y_tr), (x_va, y_va), cfg)[4::5]:
        print(f"epoch {rec.epoch:2d}  loss {rec.train_loss:.3f}  train acc {rec.train_acc:.3f}  val acc {rec.val_acc:.3f}")

    pred = predict(model, x_te).labels
    print(f"test accuracy {np.mean(pred == y_te):.3f}")
    items, mass = [], {"mobile": [], "dense": []}
    for i, (x, y, p) in enumerate(zip(x_te, y_te, pred)):
        if p != y:
            continue
        for stream in mass:
            hm = gradcam(model, stream, x[0], int(p), f"test_{i:02d}")
            mass[stream].append(quadrant_mass(hm.values, int(y)))
            if i < 4:
                items.append((hm, raw_test[i]))
    for stream, values in mass.items():
        v = np.asarray(values)
        print(f"{stream:<6} median mass in true quadrant {np.median(v):.2f}, share >= 0.5: {np.mean(v >= 0.5):.2f}")
    write_explanations(items, out)
    print(f"wrote {len(items)} overlays to {out}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
