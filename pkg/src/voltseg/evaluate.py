"""Footprint scoring (precision/recall/F1 at an IoU threshold) and
pipeline throughput reporting."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from voltseg.video_io import MaskImage

DEFAULT_IOU_THRESHOLD = 0.3
MIN_STAGE_SECONDS = 1e-3


def iou(a: MaskImage, b: MaskImage) -> float:
    """Intersection over union; two empty masks score 0."""
    if a.bits.shape != b.bits.shape:
        raise ValueError(f"mask dimensions differ: {a.bits.shape} vs {b.bits.shape}")
    union = np.logical_or(a.bits, b.bits).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a.bits, b.bits).sum() / union)


@dataclass
class MatchReport:
    matches: list[tuple[int, int, float]]  # (pred id, gt id, IoU)
    unmatched_preds: list[int]
    unmatched_gts: list[int]
    precision: float
    recall: float
    f1: float

    def to_json(self) -> str:
        return json.dumps({
            "matches": [{"pred": p, "gt": g, "iou": v} for p, g, v in self.matches],
            "unmatched_preds": self.unmatched_preds,
            "unmatched_gts": self.unmatched_gts,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }, indent=2)


def match_and_score(
    preds: list[MaskImage],
    gts: list[MaskImage],
    threshold: float = DEFAULT_IOU_THRESHOLD,
) -> MatchReport:
    """Optimal one-to-one matching (Hungarian) maximizing total IoU over
    pairs at or above the threshold."""
    matches: list[tuple[int, int, float]] = []
    if preds and gts:
        mat = np.zeros((len(preds), len(gts)))
        for i, p in enumerate(preds):
            for j, g in enumerate(gts):
                v = iou(p, g)
                if v >= threshold:
                    mat[i, j] = v
        rows, cols = linear_sum_assignment(mat, maximize=True)
        matches = [(int(i), int(j), float(mat[i, j]))
                   for i, j in zip(rows, cols) if mat[i, j] >= threshold]
    matched_p = {m[0] for m in matches}
    matched_g = {m[1] for m in matches}
    tp = len(matches)
    precision = tp / len(preds) if preds else 0.0
    recall = tp / len(gts) if gts else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MatchReport(
        matches=sorted(matches),
        unmatched_preds=[i for i in range(len(preds)) if i not in matched_p],
        unmatched_gts=[j for j in range(len(gts)) if j not in matched_g],
        precision=precision,
        recall=recall,
        f1=f1,
    )


@dataclass
class ThroughputReport:
    stage_seconds: dict[str, float]
    total_seconds: float
    frames: int
    effective_fps: float
    target_fps: float | None = None
    realtime_ratio: float | None = None

    def to_json(self) -> str:
        return json.dumps({
            "stage_seconds": self.stage_seconds,
            "total_seconds": self.total_seconds,
            "frames": self.frames,
            "effective_fps": self.effective_fps,
            "target_fps": self.target_fps,
            "realtime_ratio": self.realtime_ratio,
        }, indent=2)


def throughput_report(
    frames: int,
    stage_seconds: dict[str, float],
    target_fps: float | None = None,
    total_seconds: float | None = None,
) -> ThroughputReport:
    """Build a throughput report from measured stage times.

    Sub-millisecond stages and totals clamp to 1 ms so ratios stay finite.
    """
    if total_seconds is None:
        total_seconds = sum(stage_seconds.values())
    total_seconds = max(total_seconds, MIN_STAGE_SECONDS)
    fps = frames / total_seconds
    ratio = fps / target_fps if target_fps else None
    return ThroughputReport(
        stage_seconds=dict(stage_seconds),
        total_seconds=total_seconds,
        frames=frames,
        effective_fps=fps,
        target_fps=target_fps,
        realtime_ratio=ratio,
    )


def save_overlay_png(preds: list[MaskImage], gts: list[MaskImage],
                     path: str | Path) -> None:
    """Debug overlay: predictions in red, ground truth in green."""
    from PIL import Image

    shape = (preds + gts)[0].bits.shape
    rgb = np.zeros(shape + (3,), dtype=np.uint8)
    for p in preds:
        rgb[p.bits, 0] = 255
    for g in gts:
        rgb[g.bits, 1] = 255
    Image.fromarray(rgb).save(path)
