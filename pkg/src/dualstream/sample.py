"""The labelled image record shared by the pipeline stages."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class ImageSample:
    """One grayscale image with its label and provenance.

    ``source`` is the id of the original image a derived sample came from
    (an original is its own source).  ``transforms`` is the chain applied
    to the source, as JSON-ready dicts; originals carry an empty chain.
    """

    id: str
    label: int
    pixels: Optional[np.ndarray] = None
    source: str = ""
    path: str = ""
    transforms: list[dict] = field(default_factory=list)
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.source:
            self.source = self.id

    def manifest_entry(self) -> dict:
        entry = {"id": self.id, "label": int(self.label), "source": self.source, "transforms": self.transforms}
        if self.path:
            entry["path"] = self.path
        if self.seed is not None:
            entry["seed"] = int(self.seed)
        return entry
