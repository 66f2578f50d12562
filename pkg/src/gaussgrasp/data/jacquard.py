"""Jacquard dataset parser.

Each scene folder holds renders named ``<i>_<scene>_RGB.png``,
``<i>_<scene>_perfect_depth.tiff`` (or ``_stereo_depth.tiff``) and a
``<i>_<scene>_grasps.txt`` annotation file with ``x;y;theta_deg;opening;jaw``
lines. The scene folder name is the object id.
"""

from __future__ import annotations

import math
import warnings
from pathlib import Path
from typing import Optional

from ..grasp_core import GraspRectangle
from .records import DatasetError, DatasetWarning, ParseSummary, SampleRecord, Source

_DEPTH_NAMES = ("_perfect_depth.tiff", "_stereo_depth.tiff", "_depth.tiff", "_depth.npy")


def parse_grasp_line(line: str) -> GraspRectangle:
    parts = line.strip().split(";")
    if len(parts) != 5:
        raise ValueError(f"expected 5 ';'-separated fields, got {len(parts)}")
    x, y, theta_deg, opening, jaw = (float(p) for p in parts)
    if not all(math.isfinite(v) for v in (x, y, theta_deg, opening, jaw)):
        raise ValueError("non-finite field")
    return GraspRectangle(x, y, math.radians(theta_deg), opening, jaw)


def read_jacquard_grasps(path: Path, summary: Optional[ParseSummary] = None) -> list[GraspRectangle]:
    rects: list[GraspRectangle] = []
    seen = set()
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rect = parse_grasp_line(line)
        except ValueError as exc:
            warnings.warn(f"{Path(path).name}:{lineno}: {exc}", DatasetWarning, stacklevel=2)
            if summary is not None:
                summary.skipped_grasps += 1
            continue
        key = (rect.x, rect.y, rect.theta, rect.w, rect.h)
        if key not in seen:
            seen.add(key)
            rects.append(rect)
    return rects


def parse_jacquard(directory, summary: Optional[ParseSummary] = None) -> list[SampleRecord]:
    root = Path(directory)
    if not root.is_dir():
        raise DatasetError(f"{root} is not a directory")
    grasp_files = sorted(root.rglob("*_grasps.txt"))
    if not grasp_files:
        raise DatasetError(f"no Jacquard annotation files found under {root}")

    records = []
    for gfile in grasp_files:
        prefix = gfile.name[: -len("_grasps.txt")]
        depth = next((gfile.with_name(prefix + s) for s in _DEPTH_NAMES
                      if gfile.with_name(prefix + s).exists()), None)
        if depth is None:
            warnings.warn(f"{prefix}: missing depth render, sample skipped", DatasetWarning, stacklevel=2)
            if summary is not None:
                summary.skipped_samples.append(prefix)
            continue
        rgb = gfile.with_name(prefix + "_RGB.png")
        records.append(SampleRecord(
            sample_id=prefix,
            object_id=gfile.parent.name if gfile.parent != root else prefix.split("_", 1)[-1],
            depth_path=depth,
            rgb_path=rgb if rgb.exists() else None,
            grasp_rects=read_jacquard_grasps(gfile, summary),
            source=Source.JACQUARD,
        ))
    return records
