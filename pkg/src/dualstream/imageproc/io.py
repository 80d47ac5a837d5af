"""PNG/JPEG reading, PNG writing and JSON sample manifests."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError
from PIL.PngImagePlugin import PngInfo

from ..errors import DataError
from ..sample import ImageSample

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def read_image(path) -> np.ndarray:
    """Load an image file as a uint8 (H, W) grayscale array."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.uint8).copy()
    except (OSError, UnidentifiedImageError) as exc:
        raise DataError(f"{path}: cannot read image ({exc})") from None


def write_png(path, pixels: np.ndarray, text: Optional[dict[str, str]] = None) -> None:
    """Write a uint8 grayscale or RGB array; ``text`` becomes PNG text chunks."""
    info = PngInfo()
    for k, v in (text or {}).items():
        info.add_text(k, str(v))
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8:
        raise ValueError("write_png expects uint8 pixels")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path, pnginfo=info)


def write_manifest(path, samples: list[ImageSample], extra: Optional[dict] = None) -> dict:
    doc = dict(extra or {})
    doc["samples"] = [s.manifest_entry() for s in samples]
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))
    return doc


def read_manifest(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise DataError(f"{path}: manifest not found") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict) or "samples" not in doc:
        raise DataError(f"{path}: not a sample manifest (missing 'samples')")
    return doc


def load_manifest_samples(path, with_pixels: bool = True) -> list[ImageSample]:
    """Samples listed in a manifest; image paths resolve against its directory."""
    path = Path(path)
    doc = read_manifest(path)
    out = []
    for e in doc["samples"]:
        pixels = None
        if with_pixels:
            if "path" not in e:
                raise DataError(f"{path}: sample {e.get('id')!r} has no image path")
            pixels = read_image(path.parent / e["path"])
        out.append(ImageSample(
            id=e["id"], label=int(e["label"]), pixels=pixels, source=e.get("source", ""),
            path=e.get("path", ""), transforms=e.get("transforms", []), seed=e.get("seed"),
        ))
    return out
