"""Turn a :class:`SampleRecord` into a normalised ``C x S x S`` network input."""

from __future__ import annotations

from typing import Optional

import cv2
import numpy as np
from scipy import ndimage

from ..grasp_core import GraspRectangle
from .imageio import CORNELL_SHAPE, pointcloud_to_depth, read_depth, read_rgb
from .records import Channels, InputSpec, SampleRecord


class InputError(ValueError):
    """A sample lacks what the requested input mode needs."""


def fill_invalid_depth(depth: np.ndarray) -> np.ndarray:
    """Replace non-finite and non-positive pixels with the nearest valid value."""
    invalid = ~np.isfinite(depth) | (depth <= 0)
    if not invalid.any():
        return depth
    if invalid.all():
        return np.zeros_like(depth)
    idx = ndimage.distance_transform_edt(invalid, return_distances=False, return_indices=True)
    return depth[tuple(idx)]


def normalize_depth(depth: np.ndarray, mode: str = "per-image-zero-mean") -> np.ndarray:
    """Zero-mean depth, rescaled (not clipped) when needed so it stays in [-1, 1].

    Rescaling keeps the mean exactly zero, which hard clipping would not.
    """
    if mode == "unit-range":
        lo, hi = depth.min(), depth.max()
        return (depth - lo) / (hi - lo) if hi > lo else np.zeros_like(depth)
    out = depth - depth.mean()
    peak = np.abs(out).max()
    if peak > 1.0:
        out = out / peak
    return out


def normalize_rgb(rgb: np.ndarray, mode: str = "per-image-zero-mean") -> np.ndarray:
    out = rgb.astype(np.float64) / 255.0
    if mode == "per-image-zero-mean":
        out -= out.mean()
    return out


def _resize(img: np.ndarray, size: int) -> np.ndarray:
    interp = cv2.INTER_AREA if img.shape[0] > size else cv2.INTER_LINEAR
    return cv2.resize(img, (size, size), interpolation=interp)


def load_depth(rec: SampleRecord) -> np.ndarray:
    if rec.depth_path is not None:
        return read_depth(rec.depth_path)
    if rec.pointcloud_path is not None:
        shape = rec.image_size
        if shape is None and rec.rgb_path is not None:
            shape = read_rgb(rec.rgb_path).shape[:2]
        return pointcloud_to_depth(rec.pointcloud_path, shape or CORNELL_SHAPE)
    raise InputError(f"{rec.sample_id}: no depth source")


def crop_resize_rects(rects: list[GraspRectangle], offset: tuple[int, int], scale: float,
                      size: int) -> list[GraspRectangle]:
    """Map rectangles through a crop at ``offset`` then a resize by ``scale``.

    Uses the pixel-centre alignment of the raster resize; rectangles whose
    centre leaves the ``size x size`` frame are dropped.
    """
    ox, oy = offset
    out = []
    for r in rects:
        x = (r.x - ox + 0.5) * scale - 0.5
        y = (r.y - oy + 0.5) * scale - 0.5
        if 0 <= x < size and 0 <= y < size:
            out.append(GraspRectangle(x, y, r.theta, r.w * scale, r.h * scale))
    return out


def assemble_input(rec: SampleRecord, spec: InputSpec,
                   depth: Optional[np.ndarray] = None) -> tuple[np.ndarray, list[GraspRectangle]]:
    """Build the ``(C, S, S)`` float32 input and the matching rescaled rectangles.

    Channel order is depth first, then R, G, B.
    """
    planes = []
    shape = None
    if spec.channels.needs_depth:
        d = load_depth(rec) if depth is None else depth
        if spec.depth_fill == "nearest-valid":
            d = fill_invalid_depth(d)
        shape = d.shape
        planes.append(("depth", d))
    if spec.channels.needs_rgb:
        if rec.rgb_path is None:
            raise InputError(f"{rec.sample_id}: {spec.channels.value} input requested but no RGB image")
        rgb = read_rgb(rec.rgb_path)
        if shape is not None and rgb.shape[:2] != shape:
            raise InputError(f"{rec.sample_id}: RGB {rgb.shape[:2]} and depth {shape} sizes differ")
        shape = rgb.shape[:2]
        planes.append(("rgb", rgb))

    h, w = shape
    m = min(h, w)
    ox, oy = (w - m) // 2, (h - m) // 2
    scale = spec.size / m

    channels = []
    for kind, arr in planes:
        arr = _resize(np.ascontiguousarray(arr[oy:oy + m, ox:ox + m]).astype(np.float32), spec.size)
        if kind == "depth":
            channels.append(normalize_depth(arr.astype(np.float64), spec.normalize)[None])
        else:
            channels.append(np.moveaxis(normalize_rgb(arr, spec.normalize), -1, 0))
    image = np.concatenate(channels, axis=0).astype(np.float32)
    return image, crop_resize_rects(rec.grasp_rects, (ox, oy), scale, spec.size)
