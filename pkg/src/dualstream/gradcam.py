"""Grad-CAM on each stream's final feature map, before fusion."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from .autograd import Tensor
from .imageproc.transforms import upsample_bilinear
from .model.fusion import STREAMS, FusionModel


@dataclass
class Heatmap:
    values: np.ndarray  # (H, W) in [0, 1]
    target_class: int
    stream: str
    sample_id: str = ""

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def max_position(self) -> tuple[int, int]:
        return tuple(int(i) for i in np.unravel_index(np.argmax(self.values), self.values.shape))


def cam_from_activations(activations: np.ndarray, gradients: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Weighted channel sum of one sample's (K, h, w) maps, ReLU, upsample, max-normalise.

    Channel weights are the spatial means of ``gradients``.  Upsampling is
    bilinear with half-pixel centres.  An all-zero map stays zero.
    """
    activations = np.asarray(activations, dtype=np.float64)
    gradients = np.asarray(gradients, dtype=np.float64)
    if activations.shape != gradients.shape or activations.ndim != 3:
        raise ValueError("activations and gradients must share a (K, h, w) shape")
    weights = gradients.mean(axis=(1, 2))
    raw = np.maximum(np.tensordot(weights, activations, axes=1), 0.0)
    up = np.maximum(upsample_bilinear(raw, out_h, out_w), 0.0)
    peak = up.max()
    return up / peak if peak > 0 else np.zeros_like(up)


def gradcam(model: FusionModel, stream: str, image: np.ndarray, target_class: int, sample_id: str = "") -> Heatmap:
    """Heatmap for ``target_class`` from the chosen stream of ``model``.

    ``image`` is one normalised input, (C, H, W) or (H, W) for C = 1.
    """
    if stream not in STREAMS:
        raise ValueError(f"stream must be one of {STREAMS}, got {stream!r}")
    if not 0 <= target_class < model.config.num_classes:
        raise ValueError(f"class {target_class} out of range [0, {model.config.num_classes})")
    x = np.asarray(image)
    if x.ndim == 2:
        x = x[None]
    x = Tensor(x[None], dtype=model.head.weight.dtype)
    model.eval()
    result = model(x, return_features=True)
    seed = np.zeros(result.logits.shape, dtype=result.logits.dtype)
    seed[0, target_class] = 1.0
    params = model.parameters()
    saved = [p.grad for p in params]
    result.logits.backward(seed)
    for p, g in zip(params, saved):
        p.grad = g
    feat = result.features[stream]
    grad = feat.grad if feat.grad is not None else np.zeros_like(feat.data)
    values = cam_from_activations(feat.data[0], grad[0], x.shape[2], x.shape[3])
    return Heatmap(values, target_class, stream, sample_id)


# -- rendering -------------------------------------------------------------------


def colormap(values: np.ndarray) -> np.ndarray:
    """Linear blue -> red map: v -> (255 v, 0, 255 (1 - v)) as float RGB."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0, 1)
    return np.stack([255.0 * v, np.zeros_like(v), 255.0 * (1 - v)], axis=-1)


def overlay(heatmap: Heatmap | np.ndarray, original: np.ndarray, alpha: float = 0.4) -> np.ndarray:
    """RGB uint8 image ``(1 - alpha) * grey + alpha * colormap(heatmap)``.

    An identically zero heatmap carries nothing to show and returns the
    original as grey RGB.
    """
    values = heatmap.values if isinstance(heatmap, Heatmap) else np.asarray(heatmap, dtype=np.float64)
    original = np.asarray(original)
    if values.shape != original.shape:
        raise ValueError(f"heatmap {values.shape} and image {original.shape} differ in size")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    grey = np.repeat(original.astype(np.float64)[..., None], 3, axis=-1)
    if not values.any():
        return grey.astype(np.uint8)
    out = (1 - alpha) * grey + alpha * colormap(values)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def heatmap_filename(sample_id: str, stream: str, target_class: int) -> str:
    """Flat file name, e.g. 'Glioma/a.jpg#aug2' -> 'Glioma__a_aug2_mobile_0.png'."""
    base, _, suffix = sample_id.partition("#")
    stem, dot, ext = base.rpartition(".")
    if dot and ext.lower() in ("png", "jpg", "jpeg") and "/" not in ext:
        base = stem
    safe = re.sub(r"[^A-Za-z0-9_.-]", "_", base.replace("/", "__").replace("\\", "__"))
    if suffix:
        safe += "_" + re.sub(r"[^A-Za-z0-9_.-]", "_", suffix)
    return f"{safe}_{stream}_{target_class}.png"


def write_explanations(
    items: list[tuple[Heatmap, np.ndarray]],
    out_dir,
    alpha: float = 0.4,
    text: Optional[dict[str, str]] = None,
    index_extra: Optional[dict] = None,
) -> dict:
    """Write one overlay PNG per heatmap plus ``index.json``; return the index."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    seen: dict[str, str] = {}
    for hm, original in items:
        name = heatmap_filename(hm.sample_id, hm.stream, hm.target_class)
        if seen.setdefault(name, hm.sample_id) != hm.sample_id:
            raise ValueError(f"samples {seen[name]!r} and {hm.sample_id!r} map to the same file {name}")
        info = PngInfo()
        for k, v in (text or {}).items():
            info.add_text(k, v)
        Image.fromarray(overlay(hm, original, alpha), mode="RGB").save(out_dir / name, pnginfo=info)
        entries.append({
            "sample": hm.sample_id,
            "class": hm.target_class,
            "stream": hm.stream,
            "file": name,
            "max_position": list(hm.max_position()),
        })
    index = dict(index_extra or {})
    index["heatmaps"] = entries
    (out_dir / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True))
    return index
