"""Cornell grasping dataset parser.

Expected layout (searched recursively)::

    pcdNNNNr.png      colour image
    pcdNNNNd.tiff     depth raster (or pcdNNNN.txt, an ASCII point cloud)
    pcdNNNNcpos.txt   positive grasps, four "x y" vertex lines per rectangle

An optional ``z.txt`` (or ``objects.txt``) maps image numbers to object ids,
one ``<image_number> <object_id> ...`` line each. Without it every image is
treated as its own object.
"""

from __future__ import annotations

import logging
import math
import re
import warnings
from pathlib import Path
from typing import Optional

import numpy as np

from ..grasp_core import GraspRectangle
from .records import DatasetError, DatasetWarning, ParseSummary, SampleRecord, Source

log = logging.getLogger(__name__)

_SAMPLE_RE = re.compile(r"^pcd(\d+)(r\.png|d\.tiff?|d\.png|d\.npy|cpos\.txt|\.txt)$")
_DEPTH_SUFFIXES = ("d.tiff", "d.tif", "d.npy", "d.png")
OBJECT_MAP_NAMES = ("z.txt", "objects.txt")


def rectangle_from_vertices(vertices: np.ndarray, opening_edge_first: bool = True) -> GraspRectangle:
    """Convert four ordered corners into a :class:`GraspRectangle`.

    With ``opening_edge_first`` the edges v0-v1 and v2-v3 run along the
    gripper opening; otherwise v1-v2 and v3-v0 do.
    """
    v = np.asarray(vertices, dtype=np.float64).reshape(4, 2)
    if not np.all(np.isfinite(v)):
        raise ValueError("rectangle has non-finite vertices")
    if not opening_edge_first:
        v = np.roll(v, -1, axis=0)
    opening = v[1] - v[0]
    w = 0.5 * (np.linalg.norm(v[1] - v[0]) + np.linalg.norm(v[3] - v[2]))
    h = 0.5 * (np.linalg.norm(v[2] - v[1]) + np.linalg.norm(v[0] - v[3]))
    cx, cy = v.mean(axis=0)
    return GraspRectangle(float(cx), float(cy), math.atan2(opening[1], opening[0]), float(w), float(h))


def read_cornell_rectangles(path: Path, opening_edge_first: bool = True,
                            summary: Optional[ParseSummary] = None) -> list[GraspRectangle]:
    pts = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if len(parts) < 2:
                continue
            try:
                pts.append((float(parts[0]), float(parts[1])))
            except ValueError:
                pts.append((math.nan, math.nan))
    rects = []
    skipped = 0
    for i in range(0, len(pts) - len(pts) % 4, 4):
        try:
            rects.append(rectangle_from_vertices(np.array(pts[i:i + 4]), opening_edge_first))
        except ValueError:
            skipped += 1
    if len(pts) % 4:
        skipped += 1
    if skipped:
        warnings.warn(f"{path.name}: skipped {skipped} malformed rectangle(s)", DatasetWarning, stacklevel=2)
        if summary is not None:
            summary.skipped_grasps += skipped
    return rects


def _read_object_map(root: Path) -> dict[str, str]:
    for name in OBJECT_MAP_NAMES:
        for path in sorted(root.rglob(name)):
            mapping = {}
            for line in path.read_text().splitlines():
                parts = line.split()
                if len(parts) >= 2:
                    mapping[str(int(parts[0]))] = parts[1]
            if mapping:
                return mapping
    return {}


def parse_cornell(directory, opening_edge_first: bool = True,
                  summary: Optional[ParseSummary] = None) -> list[SampleRecord]:
    root = Path(directory)
    if not root.is_dir():
        raise DatasetError(f"{root} is not a directory")

    files: dict[str, dict[str, Path]] = {}
    for path in root.rglob("pcd*"):
        m = _SAMPLE_RE.match(path.name)
        if m:
            files.setdefault(m.group(1), {})[m.group(2)] = path
    if not files:
        raise DatasetError(f"no Cornell samples found under {root}")

    objects = _read_object_map(root)
    if not objects:
        log.warning("no object map under %s; object-wise splits will treat each image as an object", root)

    records = []
    for num in sorted(files, key=int):
        found = files[num]
        sample_id = f"pcd{num}"
        if "cpos.txt" not in found:
            warnings.warn(f"{sample_id}: missing positive-grasp annotation file", DatasetWarning, stacklevel=2)
            if summary is not None:
                summary.skipped_samples.append(sample_id)
            continue
        depth = next((found[s] for s in _DEPTH_SUFFIXES if s in found), None)
        cloud = found.get(".txt")
        if depth is None and cloud is None:
            warnings.warn(f"{sample_id}: no depth image or point cloud", DatasetWarning, stacklevel=2)
            if summary is not None:
                summary.skipped_samples.append(sample_id)
            continue
        rects = read_cornell_rectangles(found["cpos.txt"], opening_edge_first, summary)
        records.append(SampleRecord(
            sample_id=sample_id,
            object_id=objects.get(str(int(num)), sample_id),
            depth_path=depth,
            pointcloud_path=cloud,
            rgb_path=found.get("r.png"),
            grasp_rects=rects,
            source=Source.CORNELL,
        ))
    return records
