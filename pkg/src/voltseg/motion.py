"""Per-frame global translation estimation and cancellation.

Each frame is compared against a fixed reference (mean of the first 50 raw
frames) by tiling 21x21 patches over the frame, scoring every candidate
integer offset with the mean patch ZNCC, and picking the best. Patch
statistics are accelerated with summed-area tables in the search kernel.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from voltseg.kernels import mean_zncc_scores
from voltseg.video_io import Video

DEFAULT_PATCH_SIZE = 21
DEFAULT_SEARCH_RADIUS = 10
REFERENCE_FRAMES = 50


@dataclass(frozen=True)
class MotionVector:
    dx: int
    dy: int
    sub_dx: float = 0.0  # subpixel refinement in (-1, 1)
    sub_dy: float = 0.0
    confidence: float = 0.0

    @property
    def x(self) -> float:
        return self.dx + self.sub_dx

    @property
    def y(self) -> float:
        return self.dy + self.sub_dy


@dataclass(frozen=True)
class PatchGrid:
    """Non-overlapping patch tiling with a final row/column flush to the edge."""

    patch_size: int
    stride: int
    origins: np.ndarray  # (N, 2) int32 of (x, y)

    @classmethod
    def cover(cls, height: int, width: int, patch_size: int = DEFAULT_PATCH_SIZE,
              stride: int | None = None, margin: int = 0) -> "PatchGrid":
        """Tile [margin, dim - margin) so every patch plus the search margin
        stays inside the frame."""
        stride = stride or patch_size
        lo_x, hi_x = margin, width - margin - patch_size
        lo_y, hi_y = margin, height - margin - patch_size
        if hi_x < lo_x or hi_y < lo_y:
            raise ValueError(
                f"frame {height}x{width} too small for patch {patch_size} "
                f"with margin {margin}"
            )
        xs = _positions(lo_x, hi_x, stride)
        ys = _positions(lo_y, hi_y, stride)
        origins = np.array([(x, y) for y in ys for x in xs], dtype=np.int32)
        return cls(patch_size, stride, origins)


def _positions(lo: int, hi: int, stride: int) -> list[int]:
    pos = list(range(lo, hi + 1, stride))
    if pos[-1] != hi:
        pos.append(hi)  # flush to the far edge
    return pos


def zncc(patch_a: np.ndarray, patch_b: np.ndarray) -> float:
    """Zero-mean normalized cross-correlation of two equal-size windows.

    Returns 0 when either window has zero variance, so blank patches
    neither attract nor veto candidates.
    """
    a = np.asarray(patch_a, dtype=np.float64)
    b = np.asarray(patch_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"window dimensions differ: {a.shape} vs {b.shape}")
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0:
        return 0.0
    return float((a * b).sum() / denom)


def build_area_tables(frame: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Summed-area tables of values and squared values, with a zero guard
    row/column so any rectangle sum is four lookups."""
    f = np.asarray(frame, dtype=np.float64)
    sat = np.zeros((f.shape[0] + 1, f.shape[1] + 1))
    sat2 = np.zeros_like(sat)
    np.cumsum(np.cumsum(f, axis=0), axis=1, out=sat[1:, 1:])
    np.cumsum(np.cumsum(f * f, axis=0), axis=1, out=sat2[1:, 1:])
    return sat, sat2


def rect_sum(table: np.ndarray, x0: int, y0: int, w: int, h: int) -> float:
    """Sum over the rectangle [y0, y0+h) x [x0, x0+w) in O(1)."""
    return float(table[y0 + h, x0 + w] - table[y0, x0 + w]
                 - table[y0 + h, x0] + table[y0, x0])


def estimate_motion(
    frame: np.ndarray,
    reference: np.ndarray,
    grid: PatchGrid,
    search_radius: int = DEFAULT_SEARCH_RADIUS,
    subpixel: bool = True,
) -> MotionVector:
    """Integer offset maximizing mean patch ZNCC, with optional subpixel
    refinement by independent 1-D quadratic fits around the peak.

    Ties break toward smallest |dx|+|dy|, then smallest dy, then dx.
    """
    if search_radius < 1:
        raise ValueError("search_radius must be >= 1")
    scores = mean_zncc_scores(frame, reference, grid.origins,
                              grid.patch_size, search_radius)
    r = search_radius
    # Candidates pre-sorted by tie-break priority; argmax returns the first
    # (= highest-priority) index among equal scores.
    order, flat_idx = _candidate_order(r)
    best = int(np.argmax(scores.ravel()[flat_idx]))
    dx, dy = order[best]
    best_score = scores[dy + r, dx + r]
    sub_dx = sub_dy = 0.0
    if subpixel:
        sub_dx = _quadratic_peak(scores[dy + r, :], dx + r)
        sub_dy = _quadratic_peak(scores[:, dx + r], dy + r)
    return MotionVector(dx, dy, sub_dx, sub_dy, confidence=float(best_score))


@lru_cache(maxsize=8)
def _candidate_order(radius: int) -> tuple[list[tuple[int, int]], np.ndarray]:
    span = range(-radius, radius + 1)
    order = sorted(((dx, dy) for dy in span for dx in span),
                   key=lambda d: (abs(d[0]) + abs(d[1]), d[1], d[0]))
    flat = np.array([(dy + radius) * (2 * radius + 1) + dx + radius
                     for dx, dy in order])
    return order, flat


def _quadratic_peak(line: np.ndarray, i: int) -> float:
    if i <= 0 or i >= len(line) - 1:
        return 0.0
    denom = line[i - 1] - 2.0 * line[i] + line[i + 1]
    if denom >= 0:
        return 0.0
    off = 0.5 * (line[i - 1] - line[i + 1]) / denom
    return float(np.clip(off, -0.999, 0.999))


def translate(frame: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Shift frame content by (dx, dy) with edge replication; bilinear for
    fractional offsets, pure indexing for integer ones."""
    if dx == int(dx) and dy == int(dy):
        return _translate_int(frame, int(dx), int(dy))
    x0, y0 = int(np.floor(dx)), int(np.floor(dy))
    fx, fy = frame.dtype.type(dx - x0), frame.dtype.type(dy - y0)
    a = _translate_int(frame, x0, y0)
    b = _translate_int(frame, x0 + 1, y0)
    c = _translate_int(frame, x0, y0 + 1)
    d = _translate_int(frame, x0 + 1, y0 + 1)
    one = frame.dtype.type(1)
    return ((one - fy) * ((one - fx) * a + fx * b)
            + fy * ((one - fx) * c + fx * d)).astype(frame.dtype)


def _translate_int(frame: np.ndarray, dx: int, dy: int) -> np.ndarray:
    h, w = frame.shape
    if abs(dx) >= w or abs(dy) >= h:  # shifted fully off-frame
        ys = np.clip(np.arange(h) - dy, 0, h - 1)
        xs = np.clip(np.arange(w) - dx, 0, w - 1)
        return frame[np.ix_(ys, xs)]
    out = np.empty_like(frame)
    sy0, sy1 = max(0, -dy), h - max(0, dy)
    ty0, ty1 = max(0, dy), h - max(0, -dy)
    sx0, sx1 = max(0, -dx), w - max(0, dx)
    tx0, tx1 = max(0, dx), w - max(0, -dx)
    out[ty0:ty1, tx0:tx1] = frame[sy0:sy1, sx0:sx1]
    # Edge replication for the exposed bands.
    if tx0:
        out[ty0:ty1, :tx0] = frame[sy0:sy1, sx0:sx0 + 1]
    if tx1 < w:
        out[ty0:ty1, tx1:] = frame[sy0:sy1, sx1 - 1:sx1]
    if ty0:
        out[:ty0] = out[ty0]
    if ty1 < h:
        out[ty1:] = out[ty1 - 1]
    return out


@dataclass
class MotionConfig:
    patch_size: int = DEFAULT_PATCH_SIZE
    search_radius: int = DEFAULT_SEARCH_RADIUS
    subpixel: bool = True
    threads: int = 1


def make_reference(video: Video) -> np.ndarray:
    """Temporal mean of the first min(T, 50) raw frames (fixed reference)."""
    n = min(video.frames, REFERENCE_FRAMES)
    return video.data[:n].mean(axis=0, dtype=np.float64).astype(np.float32)


def correct_motion(video: Video, config: MotionConfig | None = None) -> tuple[Video, list[MotionVector]]:
    """Estimate per-frame translation against a fixed reference and cancel it."""
    config = config or MotionConfig()
    reference = make_reference(video)
    grid = PatchGrid.cover(video.height, video.width, config.patch_size,
                           margin=config.search_radius)
    frames = video.data

    def one(t: int) -> MotionVector:
        return estimate_motion(frames[t], reference, grid,
                               config.search_radius, config.subpixel)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            vectors = list(pool.map(one, range(video.frames)))
    else:
        vectors = [one(t) for t in range(video.frames)]

    corrected = np.empty_like(frames)
    for t, v in enumerate(vectors):
        if v.x == 0 and v.y == 0:
            corrected[t] = frames[t]
        else:
            corrected[t] = translate(frames[t], -v.x, -v.y)
    return Video(corrected, frame_rate=video.frame_rate), vectors


def correct_frame(frame: np.ndarray, vector: MotionVector) -> np.ndarray:
    """Cancel an estimated motion vector on a single frame."""
    if vector.x == 0 and vector.y == 0:
        return frame
    return translate(frame, -vector.x, -vector.y)


def save_motion_csv(vectors: list[MotionVector], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["frame", "dx", "dy", "confidence"])
        for t, v in enumerate(vectors):
            writer.writerow([t, f"{v.x:g}", f"{v.y:g}", f"{v.confidence:.6f}"])
