from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..grasp_core import GraspRectangle
from .augment import augment
from .cornell import parse_cornell
from .inputs import assemble_input
from .jacquard import parse_jacquard
from .records import AugmentSpec, InputSpec, ParseSummary, SampleRecord, Source


def load_records(source: str, directory, summary: Optional[ParseSummary] = None) -> list[SampleRecord]:
    source = Source(source)
    if source is Source.CORNELL:
        return parse_cornell(directory, summary=summary)
    return parse_jacquard(directory, summary=summary)


def sample_seed(seed: int, *parts) -> int:
    """Stable 63-bit seed derived from ``seed`` and e.g. ``(epoch, sample_id)``."""
    text = ":".join(str(p) for p in (seed, *parts)).encode()
    return int.from_bytes(hashlib.sha256(text).digest()[:8], "little") >> 1


class GraspDataset:
    """Indexable collection of assembled samples with optional online augmentation.

    Assembled (un-augmented) inputs are cached in memory after first use.
    """

    def __init__(self, records: Sequence[SampleRecord], input_spec: InputSpec,
                 augment_spec: Optional[AugmentSpec] = None):
        self.records = list(records)
        self.input_spec = input_spec
        self.augment_spec = augment_spec
        self._index = {r.sample_id: i for i, r in enumerate(self.records)}
        self._cache: dict[str, tuple[np.ndarray, list[GraspRectangle]]] = {}

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.sample_id for r in self.records]

    def subset(self, ids: Sequence[str]) -> "GraspDataset":
        sub = GraspDataset([self.records[self._index[i]] for i in ids], self.input_spec, self.augment_spec)
        sub._cache = self._cache
        return sub

    def record(self, sample_id: str) -> SampleRecord:
        return self.records[self._index[sample_id]]

    def assembled(self, sample_id: str) -> tuple[np.ndarray, list[GraspRectangle]]:
        if sample_id not in self._cache:
            self._cache[sample_id] = assemble_input(self.record(sample_id), self.input_spec)
        return self._cache[sample_id]

    def get(self, sample_id: str, epoch: Optional[int] = None) -> tuple[np.ndarray, list[GraspRectangle]]:
        """Assembled sample; augmented when an epoch is given and augmentation is on."""
        image, rects = self.assembled(sample_id)
        if epoch is None or self.augment_spec is None:
            return image, rects
        rng = np.random.default_rng(sample_seed(self.augment_spec.seed, epoch, sample_id))
        return augment(image, rects, self.augment_spec, rng)


def load_dataset(source: str, directory, input_spec: InputSpec,
                 augment_spec: Optional[AugmentSpec] = None) -> GraspDataset:
    return GraspDataset(load_records(source, Path(directory)), input_spec, augment_spec)
