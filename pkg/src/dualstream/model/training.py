"""Training loop and prediction."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .. import autograd as ag
from ..errors import ConfigError, NumericError
from .config import TrainConfig
from .fusion import STREAMS, FusionModel
from .nn import Linear

log = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class PredictionSet:
    scores: np.ndarray  # (N, K) softmax probabilities
    labels: np.ndarray  # argmax, ties to the lowest class index


def write_curve_csv(curve: list[EpochRecord], path, header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
        for r in curve:
            writer.writerow([r.epoch, repr(r.train_loss), repr(r.train_acc), repr(r.val_loss), repr(r.val_acc)])


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    perm = rng.permutation(n)
    # near-equal batches so none falls below the batch-norm minimum of two
    return np.array_split(perm, math.ceil(n / batch_size))


def evaluate_loss(model: FusionModel, x: np.ndarray, y: np.ndarray, batch_size: int = 64) -> tuple[float, float]:
    """Eval-mode mean loss and accuracy."""
    was_training = model.training
    model.eval()
    total_loss, correct = 0.0, 0
    with ag.no_grad():
        for start in range(0, len(x), batch_size):
            xb, yb = x[start:start + batch_size], y[start:start + batch_size]
            logits = model(xb)
            total_loss += ag.softmax_cross_entropy(logits, yb).item() * len(xb)
            correct += int((logits.data.argmax(axis=1) == yb).sum())
    model.train(was_training)
    return total_loss / len(x), correct / len(x)


def train(
    model: FusionModel,
    train_data: tuple[np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray],
    config: TrainConfig,
    checkpoint_meta: Optional[dict] = None,
) -> list[EpochRecord]:
    """Train ``model`` in place with momentum SGD on softmax cross-entropy.

    ``train_data``/``val_data`` are (images NCHW float, integer labels).
    Returns one record per epoch; train loss/accuracy are running averages
    over the epoch's batches, validation figures are eval-mode.
    """
    config.validate()
    x_tr, y_tr = train_data
    x_va, y_va = val_data
    if len(x_tr) == 0 or len(x_va) == 0:
        raise ConfigError("train and validation partitions must be non-empty")
    if config.batch_size > len(x_tr):
        raise ConfigError(f"batch_size {config.batch_size} exceeds train set size {len(x_tr)}")
    y_tr = np.asarray(y_tr, dtype=np.int64)
    y_va = np.asarray(y_va, dtype=np.int64)
    dtype = model.head.weight.dtype
    x_tr = np.asarray(x_tr, dtype=dtype)
    x_va = np.asarray(x_va, dtype=dtype)

    rng = np.random.default_rng(config.seed)
    aux_heads = {}
    if config.stream_loss_weight > 0:
        # scaffolding only: one linear classifier per stream, dropped after training
        aux_rng = np.random.default_rng([config.seed, 1])
        widths = {"mobile": model.mobile.out_channels, "dense": model.dense.out_channels}
        aux_heads = {s: Linear(aux_rng, widths[s], model.config.num_classes).astype(dtype) for s in STREAMS}
    params = model.parameters() + [p for h in aux_heads.values() for p in h.parameters()]
    opt = ag.SGD(params, config.learning_rate, config.momentum)
    curve: list[EpochRecord] = []
    if config.checkpoint_dir:
        Path(config.checkpoint_dir).mkdir(parents=True, exist_ok=True)

    for epoch in range(1, config.epochs + 1):
        model.train()
        loss_sum, correct = 0.0, 0
        for b, idx in enumerate(_batches(len(x_tr), config.batch_size, rng)):
            try:
                out = model(x_tr[idx], return_features=True)
                logits = out.logits
                fused_loss = ag.softmax_cross_entropy(logits, y_tr[idx])
                loss = fused_loss
                for s, head in aux_heads.items():
                    aux = ag.softmax_cross_entropy(head(ag.global_avg_pool(out.features[s])), y_tr[idx])
                    loss = ag.add(loss, ag.scale(aux, config.stream_loss_weight))
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {b}: {exc}") from None
            opt.zero_grad()
            loss.backward()
            opt.step()
            loss_sum += fused_loss.item() * len(idx)
            correct += int((logits.data.argmax(axis=1) == y_tr[idx]).sum())
        val_loss, val_acc = evaluate_loss(model, x_va, y_va)
        record = EpochRecord(epoch, loss_sum / len(x_tr), correct / len(x_tr), val_loss, val_acc)
        curve.append(record)
        model.epochs_completed += 1
        log.info("epoch %d: %s", epoch, asdict(record))
        if config.checkpoint_dir:
            from .checkpoint import save_checkpoint

            save_checkpoint(model, Path(config.checkpoint_dir) / f"epoch_{epoch:03d}.ckpt", extra=checkpoint_meta)
    model.eval()
    return curve


def predict(model: FusionModel, images: np.ndarray, batch_size: int = 64) -> PredictionSet:
    """Eval-mode softmax scores and argmax labels."""
    model.eval()
    images = np.asarray(images, dtype=model.head.weight.dtype)
    chunks = []
    with ag.no_grad():
        for start in range(0, len(images), batch_size):
            chunks.append(ag.softmax(model(images[start:start + batch_size]).data.astype(np.float64)))
    scores = np.concatenate(chunks) if chunks else np.zeros((0, model.config.num_classes))
    return PredictionSet(scores, scores.argmax(axis=1))
