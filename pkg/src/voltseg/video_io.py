"""Video and mask I/O plus the in-memory data model shared by all stages.

Videos are 3-D grayscale stacks (frames x height x width) stored as float32.
Two on-disk formats are supported: multi-page grayscale TIFF (interchange)
and the headered raw "VSEGV1" format (fast path for synthetic data).
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tifffile

VSEGV_MAGIC = b"VSEGV1\0\0"
_SAMPLE_F32 = 0

_TIFF_DTYPES = (np.uint8, np.uint16, np.float32)


class VideoIOError(Exception):
    """Raised when a video or mask file cannot be read or written."""


@dataclass
class Video:
    """Grayscale intensity stack with optional frame-rate metadata."""

    data: np.ndarray  # (T, H, W) float32, finite, >= 0
    frame_rate: float | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError(f"video data must be 3-D (T,H,W), got shape {self.data.shape}")
        if self.data.dtype != np.float32:
            self.data = self.data.astype(np.float32)
        if 0 in self.data.shape:
            raise ValueError(f"video dimensions must all be >= 1, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("video intensities must be finite")
        if self.data.min() < 0:
            raise ValueError("video intensities must be non-negative")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass
class MaskImage:
    """Single-frame boolean mask."""

    bits: np.ndarray  # (H, W) bool

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {self.bits.shape}")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def area(self) -> int:
        return int(self.bits.sum())


def load_video(path: str | Path) -> Video:
    """Load a multi-page grayscale TIFF or VSEGV1 raw stack.

    Integer samples are widened to float32 without rescaling.
    """
    path = Path(path)
    if not path.is_file():
        raise VideoIOError(f"cannot read video file: {path}")
    with open(path, "rb") as f:
        if f.read(8) == VSEGV_MAGIC:
            return _load_raw(path)
    return _load_tiff(path)


def _load_tiff(path: Path) -> Video:
    try:
        with tifffile.TiffFile(path) as tif:
            pages = tif.pages
            n = len(pages)
            if n == 0:
                raise VideoIOError(f"{path}: TIFF has no pages")
            first = pages[0].asarray()
            if first.ndim != 2:
                raise VideoIOError(f"{path}: page 0 is not grayscale (shape {first.shape})")
            if first.dtype not in _TIFF_DTYPES:
                raise VideoIOError(f"{path}: page 0 has unsupported sample format {first.dtype}")
            data = np.empty((n,) + first.shape, dtype=np.float32)
            data[0] = first
            for i in range(1, n):
                page = pages[i].asarray()
                if page.shape != first.shape:
                    raise VideoIOError(
                        f"{path}: page {i} has size {page.shape}, expected {first.shape}"
                    )
                if page.dtype != first.dtype:
                    raise VideoIOError(f"{path}: page {i} has sample format {page.dtype}")
                data[i] = page
    except VideoIOError:
        raise
    except Exception as exc:
        raise VideoIOError(f"{path}: unreadable TIFF: {exc}") from exc
    return Video(data)


def _load_raw(path: Path) -> Video:
    raw = path.read_bytes()
    if len(raw) < 32:
        raise VideoIOError(f"{path}: truncated VSEGV1 header ({len(raw)} bytes)")
    t, h, w, fmt = struct.unpack_from("<IIII", raw, 8)
    (rate,) = struct.unpack_from("<d", raw, 24)
    if fmt != _SAMPLE_F32:
        raise VideoIOError(f"{path}: unsupported sample-format code {fmt}")
    expected = 32 + t * h * w * 4
    if len(raw) != expected:
        raise VideoIOError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=32).reshape(t, h, w).copy()
    return Video(data, frame_rate=rate if rate > 0 else None)


def save_video(video: Video, path: str | Path) -> None:
    """Write a video so that load_video returns identical data.

    Extension selects the format: .vsegv1 writes the raw format, anything
    else writes a float32 multi-page TIFF.
    """
    path = Path(str(path))
    if str(path) == "":
        raise VideoIOError("empty output path")
    try:
        if path.suffix == ".vsegv1":
            _save_raw(video, path)
        else:
            tifffile.imwrite(path, video.data, photometric="minisblack")
    except VideoIOError:
        raise
    except Exception as exc:
        raise VideoIOError(f"cannot write {path}: {exc}") from exc


def _save_raw(video: Video, path: Path) -> None:
    header = VSEGV_MAGIC + struct.pack(
        "<IIIId",
        video.frames,
        video.height,
        video.width,
        _SAMPLE_F32,
        video.frame_rate or 0.0,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(video.data, dtype="<f4").tobytes())


def save_masks(masks: list[MaskImage], path: str | Path) -> None:
    """Write masks as a multi-page 0/255 uint8 TIFF (one page per mask)."""
    path = Path(str(path))
    if masks:
        shape = masks[0].bits.shape
        for i, m in enumerate(masks):
            if m.bits.shape != shape:
                raise VideoIOError(f"mask {i} has size {m.bits.shape}, expected {shape}")
        stack = np.stack([m.bits for m in masks]).astype(np.uint8) * 255
    else:
        stack = np.zeros((0, 1, 1), dtype=np.uint8)
    try:
        with warnings.catch_warnings():
            if stack.size == 0:
                # An empty page stack is our representation for "no masks";
                # tifffile flags the zero-size array but round-trips it fine.
                warnings.simplefilter("ignore", UserWarning)
            tifffile.imwrite(path, stack, photometric="minisblack")
    except Exception as exc:
        raise VideoIOError(f"cannot write {path}: {exc}") from exc


def load_masks(path: str | Path) -> list[MaskImage]:
    """Read masks written by save_masks."""
    try:
        stack = tifffile.imread(path)
    except Exception as exc:
        raise VideoIOError(f"cannot read {path}: {exc}") from exc
    if stack.size == 0:
        return []
    if stack.ndim == 2:
        stack = stack[None]
    return [MaskImage(page > 0) for page in stack]
