"""Seeded augmentation up to a fixed corpus size."""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, DataError
from ..sample import ImageSample
from .transforms import brightness_contrast, hflip, rotate

# cycled per source image; "affine" is a flip followed by a rotation
KINDS = ("flip", "rotate", "affine", "brightness_contrast")


@dataclass
class AugmentConfig:
    flip_probability: float = 0.5
    rotation_degrees: float = 10.0
    contrast_alpha: float = 1.2
    brightness_beta: float = 15.0
    target_total: int = 6020
    seed: int = 0

    def validate(self, source_count: int | None = None) -> None:
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ConfigError("augment.flip_probability must lie in [0, 1]")
        if self.contrast_alpha <= 0:
            raise ConfigError("augment.contrast_alpha must be positive")
        if self.rotation_degrees < 0:
            raise ConfigError("augment.rotation_degrees must be >= 0")
        if source_count is not None and self.target_total < source_count:
            raise ConfigError(f"augment.target_total {self.target_total} is below the source count {source_count}")

    def to_dict(self) -> dict:
        return asdict(self)


def item_rng(seed: int, sample_id: str, k: int = 0) -> np.random.Generator:
    """Generator for one derived item, independent of processing order."""
    return np.random.default_rng([seed, zlib.crc32(sample_id.encode("utf-8")), k])


def random_hflip(img: np.ndarray, rng: np.random.Generator, p: float = 0.5) -> tuple[np.ndarray, bool]:
    """Flip with probability ``p``; returns the image and whether it flipped."""
    flipped = bool(rng.random() < p)
    return (hflip(img) if flipped else np.asarray(img).copy()), flipped


def class_quotas(counts: list[int], target_total: int) -> list[int]:
    """Scale per-class counts to ``target_total`` with largest-remainder rounding."""
    n = sum(counts)
    exact = [c * target_total / n for c in counts]
    quotas = [int(np.floor(e)) for e in exact]
    short = target_total - sum(quotas)
    # ties on the remainder go to the lower class index
    order = sorted(range(len(counts)), key=lambda i: (-(exact[i] - quotas[i]), i))
    for i in order[:short]:
        quotas[i] += 1
    return quotas


def _apply(kind: str, img: np.ndarray, rng: np.random.Generator, cfg: AugmentConfig) -> tuple[np.ndarray, list[dict]]:
    chain: list[dict] = []
    if kind in ("flip", "affine"):
        img, flipped = random_hflip(img, rng, cfg.flip_probability)
        if flipped:
            chain.append({"op": "hflip"})
        elif kind == "flip":
            # an unflipped draw would be a bare copy; rotate instead
            kind = "rotate"
    if kind in ("rotate", "affine"):
        angle = float(rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees))
        img = rotate(img, angle)
        chain.append({"op": "rotate", "degrees": angle})
    elif kind == "brightness_contrast":
        img = brightness_contrast(img, cfg.contrast_alpha, cfg.brightness_beta)
        chain.append({"op": "brightness_contrast", "alpha": cfg.contrast_alpha, "beta": cfg.brightness_beta})
    return img, chain


def augment_dataset(samples: list[ImageSample], config: AugmentConfig, num_classes: int | None = None) -> list[ImageSample]:
    """Originals followed by generated samples, ``config.target_total`` in all.

    Each class grows in proportion to its share of the sources.  Within a
    class the extra items are spread round-robin over the sources, and the
    k-th copy of a source uses ``KINDS[k % 4]`` with its own generator, so
    the result does not depend on iteration order.
    """
    if not samples:
        raise DataError("augment_dataset: no source samples")
    config.validate(len(samples))
    k_classes = num_classes or (max(s.label for s in samples) + 1)
    by_class: list[list[ImageSample]] = [[] for _ in range(k_classes)]
    for s in samples:
        by_class[s.label].append(s)
    quotas = class_quotas([len(c) for c in by_class], config.target_total)

    out = list(samples)
    for label, members in enumerate(by_class):
        members = sorted(members, key=lambda s: s.id)
        for m in range(quotas[label] - len(members)):
            src = members[m % len(members)]
            k = m // len(members)
            rng = item_rng(config.seed, src.id, k)
            pixels, chain = _apply(KINDS[k % len(KINDS)], src.pixels, rng, config)
            out.append(ImageSample(
                id=f"{src.id}#aug{k}",
                label=label,
                pixels=pixels,
                source=src.source,
                transforms=list(src.transforms) + chain,
                seed=config.seed,
            ))
    return out
