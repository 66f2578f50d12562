from __future__ import annotations

import math

import cv2
import numpy as np

from ..grasp_core import GraspRectangle
from .records import AugmentSpec


class AugmentError(RuntimeError):
    pass


def similarity_matrix(size: int, angle: float, zoom: float, shift: tuple[float, float]) -> np.ndarray:
    """2x3 forward map: rotate by ``angle`` and scale by ``zoom`` about the image
    centre, then translate by ``shift``.

    In pixel coordinates (y down) a point ``p`` goes to
    ``c + zoom * R(angle) (p - c) + shift``.
    """
    c = (size - 1) / 2.0
    cos, sin = math.cos(angle) * zoom, math.sin(angle) * zoom
    return np.array([
        [cos, -sin, c - cos * c + sin * c + shift[0]],
        [sin, cos, c - sin * c - cos * c + shift[1]],
    ])


def transform_rects(rects: list[GraspRectangle], matrix: np.ndarray, angle: float, zoom: float,
                    size: int) -> list[GraspRectangle]:
    out = []
    for r in rects:
        x, y = matrix @ np.array([r.x, r.y, 1.0])
        if 0 <= x < size and 0 <= y < size:
            out.append(GraspRectangle(float(x), float(y), r.theta + angle, r.w * zoom, r.h * zoom))
    return out


def warp_image(image: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Apply ``matrix`` to every channel of a ``(C, S, S)`` image; uncovered pixels become 0."""
    size = image.shape[-1]
    return np.stack([
        cv2.warpAffine(ch, matrix, (size, size), flags=cv2.INTER_LINEAR,
                       borderMode=cv2.BORDER_CONSTANT, borderValue=0.0)
        for ch in image
    ]).astype(image.dtype)


def augment(image: np.ndarray, rects: list[GraspRectangle], spec: AugmentSpec,
            rng: np.random.Generator) -> tuple[np.ndarray, list[GraspRectangle]]:
    """Random rotation, zoom and crop-shift applied identically to image and labels.

    Draws are repeated (up to ``spec.max_retries``) while every grasp centre
    would leave the frame.
    """
    size = image.shape[-1]
    for _ in range(spec.max_retries):
        angle = rng.uniform(*spec.rotate)
        zoom = rng.uniform(*spec.zoom)
        shift = rng.integers(-spec.crop, spec.crop + 1, size=2) if spec.crop else (0, 0)
        if angle == 0 and zoom == 1 and not np.any(shift):
            return image.copy(), list(rects)
        m = similarity_matrix(size, angle, zoom, (float(shift[0]), float(shift[1])))
        moved = transform_rects(rects, m, angle, zoom, size)
        if moved or not rects:
            return warp_image(image, m), moved
    raise AugmentError(f"every grasp left the frame in {spec.max_retries} draws")
