"""Synthetic quadrant corpus.

Each image holds one textured disk whose quadrant encodes the class:
Glioma top-left, Meningioma top-right, Pituitary bottom-left, Normal
bottom-right.  The disk carries a stripe pattern at 45 degrees times the
class index, so the label is visible both from position and from local
texture.  Local texture matters for the explanation check, because a
stream can only localise evidence it actually reads inside the disk.
The background level is drawn per image, which keeps global brightness
from being a shortcut.
"""
from __future__ import annotations

import numpy as np

CLASS_QUADRANTS = ((0, 0), (0, 1), (1, 0), (1, 1))  # (row half, column half) per class index


def quadrant_mask(size: int, label: int) -> np.ndarray:
    r, c = CLASS_QUADRANTS[label]
    half = size // 2
    mask = np.zeros((size, size), dtype=bool)
    mask[r * half:(r + 1) * half if r == 0 else size, c * half:(c + 1) * half if c == 0 else size] = True
    return mask


def blob_image(rng: np.random.Generator, label: int, size: int = 64) -> np.ndarray:
    """One image: a striped disk inside the class quadrant over a flat random background."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    half = size / 2
    r, c = CLASS_QUADRANTS[label]
    img = np.full((size, size), rng.uniform(0, 60))
    rad = rng.uniform(0.30, 0.36) * half
    cy = rng.uniform(0.42, 0.58) * half + r * half
    cx = rng.uniform(0.42, 0.58) * half + c * half
    theta = np.deg2rad(45 * label + rng.uniform(-5, 5))
    period = rng.uniform(5, 7)
    phase = (xx - cx) * np.cos(theta) + (yy - cy) * np.sin(theta)
    stripes = np.cos(2 * np.pi * phase / period + rng.uniform(0, 2 * np.pi))
    edge = np.clip((rad - np.hypot(yy - cy, xx - cx)) / 1.5 + 0.5, 0, 1)  # anti-aliased rim
    img += edge * (90 + 70 * stripes)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def make_quadrant_blobs(n_per_class: int = 50, size: int = 64, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Return (images uint8 (N, size, size), labels) ordered by class then index."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for label in range(len(CLASS_QUADRANTS)):
        for _ in range(n_per_class):
            images.append(blob_image(rng, label, size))
            labels.append(label)
    return np.stack(images), np.asarray(labels, dtype=np.int64)


def quadrant_mass(heat: np.ndarray, label: int) -> float:
    """Fraction of a non-negative heatmap's total mass lying in ``label``'s quadrant (0 for an all-zero map)."""
    total = float(heat.sum())
    return float(heat[quadrant_mask(heat.shape[0], label)].sum()) / total if total > 0 else 0.0
