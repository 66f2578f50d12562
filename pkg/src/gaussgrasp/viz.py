"""Static heatmap and grasp-overlay rasters."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional, Sequence

import cv2
import numpy as np

from .grasp_core import GraspMaps, GraspRectangle


def to_uint8(arr: np.ndarray, lo: Optional[float] = None, hi: Optional[float] = None) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    lo = float(np.nanmin(arr)) if lo is None else lo
    hi = float(np.nanmax(arr)) if hi is None else hi
    if hi <= lo:
        return np.zeros(arr.shape, np.uint8)
    return np.clip(np.round(255 * (arr - lo) / (hi - lo)), 0, 255).astype(np.uint8)


def heatmap(arr: np.ndarray, lo: Optional[float] = None, hi: Optional[float] = None,
            cmap: int = cv2.COLORMAP_JET) -> np.ndarray:
    """BGR colour-mapped image of a 2-D array."""
    return cv2.applyColorMap(to_uint8(arr, lo, hi), cmap)


def background(image: np.ndarray) -> np.ndarray:
    """Greyscale BGR rendering of a ``(C, H, W)`` network input (first channel)."""
    img = np.asarray(image)
    if img.ndim == 3:
        img = img[0] if img.shape[0] in (1, 3, 4) else img[..., 0]
    return cv2.cvtColor(to_uint8(img), cv2.COLOR_GRAY2BGR)


def draw_rectangles(canvas: np.ndarray, rects: Sequence[GraspRectangle],
                    color=(0, 0, 255), thickness: int = 1) -> np.ndarray:
    out = canvas.copy()
    for r in rects:
        pts = np.round(r.corners()).astype(np.int32)
        # jaw edges thicker than the opening edges
        cv2.line(out, tuple(pts[1]), tuple(pts[2]), color, thickness + 1)
        cv2.line(out, tuple(pts[3]), tuple(pts[0]), color, thickness + 1)
        cv2.line(out, tuple(pts[0]), tuple(pts[1]), color, thickness)
        cv2.line(out, tuple(pts[2]), tuple(pts[3]), color, thickness)
    return out


def save_maps(maps: GraspMaps, out_prefix, w_max: float = 150.0) -> list[Path]:
    """Write quality, angle and width heatmaps; returns the paths."""
    prefix = Path(out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, arr, lo, hi in [("quality", maps.quality, 0.0, 1.0),
                              ("angle", maps.angle(), -math.pi / 2, math.pi / 2),
                              ("width", maps.width * w_max, 0.0, None)]:
        path = prefix.with_name(f"{prefix.name}_{name}.png")
        cv2.imwrite(str(path), heatmap(arr, lo, hi))
        paths.append(path)
    return paths


def save_overlay(image: np.ndarray, rects: Sequence[GraspRectangle], path,
                 labels: Sequence[GraspRectangle] = ()) -> Path:
    canvas = background(image)
    canvas = draw_rectangles(canvas, labels, color=(0, 200, 0))
    canvas = draw_rectangles(canvas, rects, color=(0, 0, 255))
    path = Path(path)
    cv2.imwrite(str(path), canvas)
    return path
