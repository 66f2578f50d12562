"""Rectangle-metric scoring: oriented-rectangle Jaccard, the 30 degree angle
rule and dataset-level accuracy."""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .grasp_core import (GraspRectangle, PlanarGrasp, angle_difference, decode_grasps,
                         rectangle_from_planar)
from .network import forward

log = logging.getLogger(__name__)


@dataclass
class MatchCriteria:
    angle_threshold: float = math.pi / 6
    jaccard_threshold: float = 0.25
    top_k: int = 1

    def __post_init__(self):
        if self.angle_threshold <= 0 or self.jaccard_threshold <= 0:
            raise ValueError("thresholds must be positive")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass
class SampleResult:
    sample_id: str
    matched: bool
    best_jaccard: float
    best_angle_diff: float


@dataclass
class EvalReport:
    per_sample: list[SampleResult]
    split_mode: str = "unspecified"
    input_mode: str = "unspecified"
    excluded: list[str] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        if not self.per_sample:
            return 0.0
        return sum(r.matched for r in self.per_sample) / len(self.per_sample)

    def to_dict(self) -> dict:
        return {
            "summary": {
                "accuracy": self.accuracy,
                "matched": sum(r.matched for r in self.per_sample),
                "samples": len(self.per_sample),
                "excluded": len(self.excluded),
                "split_mode": self.split_mode,
                "input_mode": self.input_mode,
            },
            "excluded": list(self.excluded),
            "samples": [asdict(r) for r in self.per_sample],
        }

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


# ----------------------------------------------------------------------------
# geometry


def polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of ``subject`` by the convex polygon ``clip``."""
    if _signed_area(clip) < 0:
        clip = clip[::-1]
    out = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay

        def side(p):
            return ex * (p[1] - ay) - ey * (p[0] - ax)

        inp, out = out, []
        prev = inp[-1]
        s_prev = side(prev)
        for cur in inp:
            s_cur = side(cur)
            if s_cur >= 0:
                if s_prev < 0:
                    t = s_prev / (s_prev - s_cur)
                    out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
                out.append(cur)
            elif s_prev >= 0:
                t = s_prev / (s_prev - s_cur)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            prev, s_prev = cur, s_cur
    return np.array(out, dtype=np.float64).reshape(-1, 2)


def jaccard(a: GraspRectangle, b: GraspRectangle) -> float:
    """Intersection over union of two oriented rectangles (exact, by clipping)."""
    area_a, area_b = a.area, b.area
    if not (area_a > 0 and area_b > 0):
        raise ValueError("jaccard is undefined for zero-area rectangles")
    if a == b:
        return 1.0
    # clip in a canonical order so J(a, b) and J(b, a) are bit-identical
    first, second = sorted((a, b), key=lambda r: (r.x, r.y, r.theta, r.w, r.h))
    inter = polygon_area(clip_convex(first.corners(), second.corners()))
    inter = min(inter, area_a, area_b)
    union = area_a + area_b - inter
    return min(max(inter / union, 0.0), 1.0)


def angle_match(phi_pred: float, phi_label: float, threshold: float = math.pi / 6) -> bool:
    """True when the pi-periodic angle difference is below ``threshold``."""
    return angle_difference(phi_pred, phi_label) < threshold


def is_correct(pred: GraspRectangle, labels: Sequence[GraspRectangle],
               crit: Optional[MatchCriteria] = None) -> tuple[bool, float, float]:
    """Rectangle metric against one sample's labels.

    Correct iff a single label satisfies both the angle rule and
    ``jaccard > threshold``. Returns ``(correct, best_jaccard, best_angle_diff)``
    where the bests range over angle-passing labels (all labels if none pass).
    """
    crit = crit or MatchCriteria()
    if not labels:
        raise ValueError("is_correct needs at least one label")
    diffs = [angle_difference(pred.theta, l.theta) for l in labels]
    passing = [i for i, d in enumerate(diffs) if d < crit.angle_threshold]
    pool = passing or range(len(labels))
    jacc = {i: jaccard(pred, labels[i]) for i in pool}
    correct = any(jacc[i] > crit.jaccard_threshold for i in passing)
    return correct, max(jacc.values()), min(diffs[i] for i in pool)


def score_sample(sample_id: str, preds: Sequence[GraspRectangle], labels: Sequence[GraspRectangle],
                 crit: MatchCriteria) -> SampleResult:
    """Sample is matched when any of the first ``top_k`` predictions is correct."""
    best = None
    for pred in list(preds)[:crit.top_k]:
        ok, j, d = is_correct(pred, labels, crit)
        cand = (ok, j, -d)
        if best is None or cand > best:
            best = cand
    if best is None:
        return SampleResult(sample_id, False, 0.0, math.pi / 2)
    return SampleResult(sample_id, bool(best[0]), float(best[1]), float(-best[2]))


def score_predictions(predictions: Mapping[str, Sequence[GraspRectangle]],
                      labels: Mapping[str, Sequence[GraspRectangle]],
                      crit: Optional[MatchCriteria] = None, split_mode: str = "unspecified",
                      input_mode: str = "unspecified") -> EvalReport:
    """Score precomputed rectangles (bypassing the network)."""
    crit = crit or MatchCriteria()
    results, excluded = [], []
    for sid, preds in predictions.items():
        if not labels.get(sid):
            warnings.warn(f"{sid}: no ground-truth grasps, excluded from accuracy", stacklevel=2)
            excluded.append(sid)
            continue
        results.append(score_sample(sid, preds, labels[sid], crit))
    return EvalReport(results, split_mode, input_mode, excluded)


def planar_to_rects(grasps: Sequence[PlanarGrasp], jaw_ratio: float = 0.5) -> list[GraspRectangle]:
    return [rectangle_from_planar(g, jaw_ratio) for g in grasps if g.width > 0]


def evaluate(net, dataset, split_ids: Sequence[str], crit: Optional[MatchCriteria] = None,
             w_max: float = 150.0, smooth_sigma: float = 2.0, jaw_ratio: float = 0.5,
             batch_size: int = 8, split_mode: str = "unspecified") -> EvalReport:
    """Run the network over ``split_ids`` and score its top-k grasps.

    Samples that fail to load are excluded and listed in the report.
    """
    crit = crit or MatchCriteria()
    if not split_ids:
        raise ValueError("evaluation split is empty")
    predictions: dict[str, list[GraspRectangle]] = {}
    labels: dict[str, list[GraspRectangle]] = {}
    excluded: list[str] = []
    loaded: list[tuple[str, np.ndarray]] = []

    def flush():
        if not loaded:
            return
        maps = forward(net, np.stack([img for _, img in loaded]))
        for i, (sid, _) in enumerate(loaded):
            grasps = decode_grasps(maps[i], k=crit.top_k, smooth_sigma=smooth_sigma, w_max=w_max)
            predictions[sid] = planar_to_rects(grasps, jaw_ratio)
        loaded.clear()

    for sid in split_ids:
        try:
            image, rects = dataset.get(sid)
        except (OSError, ValueError) as exc:
            log.warning("%s: excluded from evaluation (%s)", sid, exc)
            excluded.append(sid)
            continue
        labels[sid] = rects
        loaded.append((sid, image))
        if len(loaded) == batch_size:
            flush()
    flush()

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = score_predictions(predictions, labels, crit, split_mode,
                                   dataset.input_spec.channels.value)
    if report.excluded:
        log.warning("%d sample(s) without labels excluded", len(report.excluded))
    report.excluded = excluded + report.excluded
    return report
