"""Corpus loading, the 80-10-10 split and stratified k-folds."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError
from .imageproc.io import IMAGE_SUFFIXES, read_image
from .sample import ImageSample

log = logging.getLogger(__name__)

CLASS_NAMES = ("Glioma", "Meningioma", "Pituitary", "Normal")


@dataclass
class LabeledCorpus:
    class_names: tuple[str, ...]
    samples: dict[str, ImageSample] = field(default_factory=dict)

    def __post_init__(self):
        if not self.class_names:
            raise DataError("a corpus needs at least one class")

    @classmethod
    def from_samples(cls, samples, class_names=CLASS_NAMES) -> "LabeledCorpus":
        corpus = cls(tuple(class_names))
        for s in samples:
            corpus.add(s)
        return corpus

    @classmethod
    def from_counts(cls, counts, class_names=None) -> "LabeledCorpus":
        """Pixel-less corpus with ``counts[c]`` samples of class c (handy for split arithmetic)."""
        names = tuple(class_names or CLASS_NAMES[:len(counts)])
        return cls.from_samples(
            (ImageSample(f"{names[c]}/{i:05d}", c) for c, n in enumerate(counts) for i in range(n)), names
        )

    def add(self, sample: ImageSample) -> None:
        if sample.id in self.samples:
            raise DataError(f"duplicate sample id {sample.id!r}")
        if not 0 <= sample.label < len(self.class_names):
            raise DataError(f"sample {sample.id!r}: label {sample.label} out of range")
        self.samples[sample.id] = sample

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def ids(self) -> list[str]:
        return list(self.samples)

    def ids_by_class(self) -> list[list[str]]:
        out: list[list[str]] = [[] for _ in self.class_names]
        for sid, s in self.samples.items():
            out[s.label].append(sid)
        return out

    @property
    def counts(self) -> list[int]:
        return [len(ids) for ids in self.ids_by_class()]

    def subset(self, ids) -> list[ImageSample]:
        return [self.samples[i] for i in ids]

    def arrays(self, ids) -> tuple[np.ndarray, np.ndarray]:
        """Stacked pixels and labels for ``ids``."""
        ss = self.subset(ids)
        if not ss:
            raise DataError("cannot stack an empty partition")
        return np.stack([s.pixels for s in ss]), np.array([s.label for s in ss], dtype=np.int64)


def _class_dirs(root: Path) -> list[tuple[str, Path]]:
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and not p.name.startswith("."))
    if not dirs:
        raise DataError(f"{root}: no class subdirectories")
    by_lower = {p.name.lower(): p for p in dirs}
    if set(by_lower) == {n.lower() for n in CLASS_NAMES}:
        return [(n, by_lower[n.lower()]) for n in CLASS_NAMES]
    return [(p.name, p) for p in dirs]


def load_corpus(root, permissive: bool = False) -> LabeledCorpus:
    """Read a directory-per-class tree into a corpus.

    Directories named after the four tumour classes are taken in the
    canonical class order; any other set of names is taken
    lexicographically.  Files are read in sorted order and converted to
    grayscale.  An unreadable file is an error unless ``permissive``, in
    which case it is logged and skipped.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: dataset root is not a directory")
    classes = _class_dirs(root)
    corpus = LabeledCorpus(tuple(name for name, _ in classes))
    for label, (name, d) in enumerate(classes):
        files = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        kept = 0
        for f in files:
            try:
                pixels = read_image(f)
            except DataError:
                if not permissive:
                    raise
                log.warning("skipping unreadable file %s", f)
                continue
            rel = f"{d.name}/{f.name}"
            corpus.add(ImageSample(rel, label, pixels, path=str(f)))
            kept += 1
        if kept == 0:
            raise DataError(f"{d}: class directory holds no readable images")
    return corpus


# -- splits --------------------------------------------------------------------


@dataclass
class DatasetSplit:
    """Named, disjoint id lists plus the seed and rule that produced them."""

    partitions: dict[str, list[str]]
    seed: int
    strategy: str

    def __getitem__(self, name: str) -> list[str]:
        return self.partitions[name]

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "seed": self.seed, "partitions": self.partitions}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSplit":
        try:
            return cls({k: list(v) for k, v in d["partitions"].items()}, int(d["seed"]), str(d["strategy"]))
        except (KeyError, TypeError, AttributeError) as exc:
            raise DataError(f"malformed split manifest: {exc}") from None

    def save(self, path, extra: Optional[dict] = None) -> None:
        doc = dict(extra or {})
        doc.update(self.to_dict())
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "DatasetSplit":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except FileNotFoundError:
            raise DataError(f"{path}: split manifest not found") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None


def _class_rng(seed: int, label: int) -> np.random.Generator:
    return np.random.default_rng([seed, label])


def split_80_10_10(corpus: LabeledCorpus, seed: int = 0, group_by_source: bool = False) -> DatasetSplit:
    """Per class: shuffle, then train = floor(0.8 n), validation = floor(0.1 n), test = rest.

    With ``group_by_source`` whole source groups (an original and its
    augmentations) are shuffled and dealt out instead, so no source spans
    two partitions; the partition sizes then only approximate the rule.
    """
    parts: dict[str, list[str]] = {"train": [], "validation": [], "test": []}
    for label, ids in enumerate(corpus.ids_by_class()):
        n = len(ids)
        if n < 3:
            raise DataError(f"class {corpus.class_names[label]!r} has {n} samples; the split needs at least 3")
        n_train, n_val = math.floor(0.8 * n), math.floor(0.1 * n)
        rng = _class_rng(seed, label)
        if not group_by_source:
            order = [ids[i] for i in rng.permutation(n)]
            parts["train"] += order[:n_train]
            parts["validation"] += order[n_train:n_train + n_val]
            parts["test"] += order[n_train + n_val:]
            continue
        groups: dict[str, list[str]] = {}
        for sid in ids:
            groups.setdefault(corpus.samples[sid].source, []).append(sid)
        keys = list(groups)
        taken = {"train": 0, "validation": 0}
        for i in rng.permutation(len(keys)):
            members = groups[keys[i]]
            if taken["train"] < n_train:
                name = "train"
            elif taken["validation"] < n_val:
                name = "validation"
            else:
                name = "test"
            parts[name] += members
            if name in taken:
                taken[name] += len(members)
    return DatasetSplit(parts, seed, "80-10-10/by-source" if group_by_source else "80-10-10")


def stratified_kfold(corpus: LabeledCorpus, k: int = 5, seed: int = 0) -> list[DatasetSplit]:
    """k folds; fold i tests on its own ids and trains on the rest.

    Each class is shuffled and dealt round-robin to the folds.  The deal
    for a class starts where the previous class stopped, which keeps the
    total fold sizes within one of each other as well.
    """
    if k < 2:
        raise DataError("k must be at least 2")
    folds: list[list[str]] = [[] for _ in range(k)]
    start = 0
    for label, ids in enumerate(corpus.ids_by_class()):
        n = len(ids)
        if n < k:
            raise DataError(f"class {corpus.class_names[label]!r} has {n} samples, fewer than k = {k}")
        for j, i in enumerate(_class_rng(seed, label).permutation(n)):
            folds[(start + j) % k].append(ids[i])
        start = (start + n) % k
    splits = []
    for i in range(k):
        train = [sid for j in range(k) if j != i for sid in folds[j]]
        splits.append(DatasetSplit({"train": train, "test": list(folds[i])}, seed, f"{k}-fold/{i}"))
    return splits
