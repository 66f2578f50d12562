from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

from ..grasp_core import GraspRectangle


class DatasetError(RuntimeError):
    """Raised when a dataset directory cannot be used at all."""


class DatasetWarning(UserWarning):
    """Emitted for recoverable per-sample or per-line problems."""


class Source(str, Enum):
    CORNELL = "cornell"
    JACQUARD = "jacquard"


@dataclass
class SampleRecord:
    sample_id: str
    object_id: str
    depth_path: Optional[Path]
    grasp_rects: list[GraspRectangle]
    source: Source
    rgb_path: Optional[Path] = None
    # depth rasters are sometimes derived from a point cloud on first load
    pointcloud_path: Optional[Path] = None
    image_size: Optional[tuple[int, int]] = None  # (H, W) when known


class Channels(str, Enum):
    D = "d"
    RGB = "rgb"
    RGBD = "rgbd"

    @property
    def count(self) -> int:
        return {"d": 1, "rgb": 3, "rgbd": 4}[self.value]

    @property
    def needs_depth(self) -> bool:
        return self is not Channels.RGB

    @property
    def needs_rgb(self) -> bool:
        return self is not Channels.D


@dataclass
class InputSpec:
    channels: Channels = Channels.D
    size: int = 300
    depth_fill: str = "nearest-valid"
    normalize: str = "per-image-zero-mean"

    def __post_init__(self):
        self.channels = Channels(self.channels.lower())
        if self.size <= 0 or self.size % 4:
            raise ValueError(f"input size must be a positive multiple of 4, got {self.size}")
        if self.depth_fill not in ("nearest-valid", "none"):
            raise ValueError(f"unknown depth_fill {self.depth_fill!r}")
        if self.normalize not in ("per-image-zero-mean", "unit-range"):
            raise ValueError(f"unknown normalize {self.normalize!r}")


@dataclass
class AugmentSpec:
    rotate: tuple[float, float] = (0.0, 2 * math.pi)
    zoom: tuple[float, float] = (0.5, 1.0)
    crop: int = 20
    seed: int = 0
    max_retries: int = 10

    def __post_init__(self):
        self.rotate = tuple(self.rotate)
        self.zoom = tuple(self.zoom)
        lo, hi = self.zoom
        if not (0 < lo <= hi <= 1.5):
            raise ValueError(f"zoom range must lie in (0, 1.5], got {self.zoom}")
        if self.rotate[0] > self.rotate[1]:
            raise ValueError(f"empty rotation range {self.rotate}")
        if self.crop < 0:
            raise ValueError("crop must be non-negative")

    @classmethod
    def identity(cls, seed: int = 0) -> "AugmentSpec":
        return cls(rotate=(0.0, 0.0), zoom=(1.0, 1.0), crop=0, seed=seed)


@dataclass
class ParseSummary:
    """Optional collector for what a parser skipped."""

    skipped_samples: list[str] = field(default_factory=list)
    skipped_grasps: int = 0
