"""Raster readers for depth and colour images."""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

CORNELL_SHAPE = (480, 640)


def read_rgb(path: Path) -> np.ndarray:
    """Return an ``(H, W, 3)`` uint8 RGB array."""
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise OSError(f"cannot read image {path}")
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB)


def read_depth(path: Path) -> np.ndarray:
    """Return an ``(H, W)`` float64 depth array (units as stored on disk)."""
    path = Path(path)
    if path.suffix == ".npy":
        arr = np.load(path)
    else:
        arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED | cv2.IMREAD_ANYDEPTH)
        if arr is None:
            raise OSError(f"cannot read depth image {path}")
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[..., 0]
    return arr


def write_depth(path: Path, depth: np.ndarray) -> None:
    path = Path(path)
    if path.suffix == ".npy":
        np.save(path, depth)
    elif not cv2.imwrite(str(path), np.asarray(depth, dtype=np.float32)):
        raise OSError(f"cannot write depth image {path}")


def pointcloud_to_depth(path: Path, shape: tuple[int, int] = CORNELL_SHAPE) -> np.ndarray:
    """Rasterise an ASCII PCD point cloud (``x y z rgb index`` rows) into depth.

    ``index`` is the row-major pixel index of each point; pixels with no
    point are left at 0 (invalid).
    """
    depth = np.zeros(shape)
    with open(path) as fh:
        for line in fh:
            if line.startswith("DATA"):
                break
        rows = np.loadtxt(fh, ndmin=2)
    if rows.size == 0:
        return depth
    idx = rows[:, 4].astype(np.int64)
    keep = (idx >= 0) & (idx < depth.size)
    depth.flat[idx[keep]] = rows[keep, 2]
    return depth
