"""Per-neuron voltage traces: mean ROI intensity per motion-corrected frame."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from voltseg.footprints import FootprintSet
from voltseg.video_io import MaskImage, Video


@dataclass
class Trace:
    footprint_id: int
    samples: np.ndarray  # (T,)
    frame_rate: float | None = None


def extract_trace(video: Video, mask: MaskImage, footprint_id: int = 0) -> Trace:
    """Mean intensity over the mask pixels for every frame."""
    if mask.bits.shape != (video.height, video.width):
        raise ValueError(
            f"mask {mask.bits.shape} does not match frames "
            f"({video.height}, {video.width})"
        )
    ys, xs = np.nonzero(mask.bits)
    if len(ys) == 0:
        raise ValueError("empty ROI mask")
    samples = video.data[:, ys, xs].mean(axis=1, dtype=np.float64)
    return Trace(footprint_id, samples, video.frame_rate)


def extract_all(video: Video, footprints: FootprintSet) -> list[Trace]:
    """One trace per footprint, order preserved."""
    return [extract_trace(video, fp.mask, i)
            for i, fp in enumerate(footprints.footprints)]


def dff(trace: Trace, baseline_percentile: float = 10.0) -> Trace:
    """Optional dF/F conversion against the per-trace percentile baseline."""
    baseline = np.percentile(trace.samples, baseline_percentile)
    if baseline == 0:
        raise ValueError("zero baseline, dF/F undefined")
    return Trace(trace.footprint_id, (trace.samples - baseline) / baseline,
                 trace.frame_rate)


def save_traces_csv(traces: list[Trace], path: str | Path,
                    sidecar_path: str | Path | None = None) -> None:
    """CSV with one column per footprint and one row per frame; the frame
    rate goes into a sidecar JSON."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["frame"] + [str(t.footprint_id) for t in traces])
        n = len(traces[0].samples) if traces else 0
        for row in range(n):
            writer.writerow([row] + [f"{t.samples[row]:.6f}" for t in traces])
    if sidecar_path is None:
        sidecar_path = path.with_suffix(".json")
    rate = traces[0].frame_rate if traces else None
    Path(sidecar_path).write_text(json.dumps({"frame_rate": rate}))
