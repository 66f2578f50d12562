"""Independent reference implementations used as test oracles."""

import math

import numpy as np

from gaussgrasp.grasp_core import GraspRectangle


def rasterized_iou(a: GraspRectangle, b: GraspRectangle, n: int = 1000) -> float:
    """Pixel-centre sampling on an n x n grid over the joint bounding box."""
    pts = np.vstack([a.corners(), b.corners()])
    lo, hi = pts.min(0), pts.max(0)
    xs = lo[0] + (np.arange(n) + 0.5) * (hi[0] - lo[0]) / n
    ys = lo[1] + (np.arange(n) + 0.5) * (hi[1] - lo[1]) / n
    gx, gy = np.meshgrid(xs, ys)

    def inside(r):
        c, s = math.cos(r.theta), math.sin(r.theta)
        dx, dy = gx - r.x, gy - r.y
        return (np.abs(dx * c + dy * s) <= r.w / 2) & (np.abs(-dx * s + dy * c) <= r.h / 2)

    ia, ib = inside(a), inside(b)
    return float((ia & ib).sum() / (ia | ib).sum())


def random_pair(rng):
    """Two oriented rectangles with nearby centres, so most pairs overlap."""
    a = GraspRectangle(rng.uniform(20, 40), rng.uniform(20, 40), rng.uniform(-math.pi, math.pi),
                       rng.uniform(3, 30), rng.uniform(3, 30))
    b = GraspRectangle(a.x + rng.uniform(-12, 12), a.y + rng.uniform(-12, 12), rng.uniform(-math.pi, math.pi),
                       rng.uniform(3, 30), rng.uniform(3, 30))
    return a, b
