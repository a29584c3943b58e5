"""Lightweight U-Net inference on 64x64 two-channel summary patches.

The canonical architecture is fixed: encoder widths [16, 32, 64] with two
3x3 conv + ReLU per level and 2x2 max-pooling between levels, a mirrored
decoder with nearest-neighbor upsampling and skip concatenations, and a
final 1x1 convolution + sigmoid. Convolutions run as im2col matmuls so
inference stays on the BLAS fast path.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PATCH = 64
IN_CHANNELS = 2
ENCODER_WIDTHS = (16, 32, 64)
DEFAULT_STRIDE = 32
MERGE_WEIGHT_FLOOR = 1e-3

WEIGHT_MAGIC = b"VSEGW1\0\0"


class WeightFormatError(Exception):
    """Raised when a weight file does not match the VSEGW1 format or the
    canonical architecture."""


def architecture() -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) list of the canonical parameter tensors.

    Kernel shapes are (out_channels, in_channels, ky, kx).
    """
    tensors: list[tuple[str, tuple[int, ...]]] = []

    def conv(name: str, cin: int, cout: int, k: int = 3):
        tensors.append((f"{name}.kernel", (cout, cin, k, k)))
        tensors.append((f"{name}.bias", (cout,)))

    widths = ENCODER_WIDTHS
    cin = IN_CHANNELS
    for level, cout in enumerate(widths, start=1):
        conv(f"enc{level}.conv1", cin, cout)
        conv(f"enc{level}.conv2", cout, cout)
        cin = cout
    for level in range(len(widths) - 1, 0, -1):
        cout = widths[level - 1]
        conv(f"dec{level}.conv1", cin + cout, cout)
        conv(f"dec{level}.conv2", cout, cout)
        cin = cout
    conv("out.conv", cin, 1, k=1)
    return tensors


def architecture_fingerprint() -> str:
    """Stable identifier tying weight files to the layer graph."""
    parts = [f"{n}:{'x'.join(map(str, s))}" for n, s in architecture()]
    return f"vseg-unet/{PATCH}x{PATCH}x{IN_CHANNELS};" + ";".join(parts)


def parameter_count() -> int:
    return sum(int(np.prod(s)) for _, s in architecture())


@dataclass
class WeightBundle:
    """Named parameter tensors matching the canonical architecture."""

    tensors: dict[str, np.ndarray]
    fingerprint: str = field(default_factory=architecture_fingerprint)

    def validate(self) -> None:
        expected = architecture()
        names = {n for n, _ in expected}
        for name, shape in expected:
            if name not in self.tensors:
                raise WeightFormatError(f"missing tensor {name!r}")
            got = tuple(self.tensors[name].shape)
            if got != shape:
                raise WeightFormatError(f"tensor {name!r} has shape {got}, expected {shape}")
        extra = set(self.tensors) - names
        if extra:
            raise WeightFormatError(f"unexpected tensors: {sorted(extra)}")
        for name, arr in self.tensors.items():
            if not np.all(np.isfinite(arr)):
                raise WeightFormatError(f"tensor {name!r} contains non-finite values")
        if self.fingerprint != architecture_fingerprint():
            raise WeightFormatError("architecture fingerprint mismatch")

    @classmethod
    def zeros(cls) -> "WeightBundle":
        return cls({n: np.zeros(s, dtype=np.float32) for n, s in architecture()})

    @classmethod
    def random(cls, rng: np.random.Generator, scale: float = 0.1) -> "WeightBundle":
        return cls({
            n: (rng.standard_normal(s) * scale).astype(np.float32)
            for n, s in architecture()
        })


@dataclass(frozen=True)
class ProbabilityMap:
    segment_index: int
    values: np.ndarray  # (H, W) in [0, 1]


def _conv3x3(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """3x3 stride-1 zero-padded convolution in channel-first (C, N, H, W)
    layout: one big GEMM computes all nine taps, which are then summed at
    their spatial offsets."""
    c, n, h, w = x.shape
    cout = kernel.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    flat = xp.reshape(c, -1)
    k = np.ascontiguousarray(kernel.transpose(2, 3, 0, 1).reshape(9 * cout, c))
    taps = (k @ flat).reshape(3, 3, cout, n, h + 2, w + 2)
    out = np.empty((cout, n, h, w), dtype=np.float32)
    out[:] = bias.reshape(cout, 1, 1, 1)
    for dy in range(3):
        for dx in range(3):
            out += taps[dy, dx, :, :, dy:dy + h, dx:dx + w]
    return out


def _conv1x1(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    c, n, h, w = x.shape
    cout = kernel.shape[0]
    k = kernel.reshape(cout, c)
    out = (k @ x.reshape(c, -1)) + bias.reshape(cout, 1)
    return out.reshape(cout, n, h, w)


def _maxpool2(x: np.ndarray) -> np.ndarray:
    c, n, h, w = x.shape
    return x.reshape(c, n, h // 2, 2, w // 2, 2).max(axis=(3, 5))


def _upsample2(x: np.ndarray) -> np.ndarray:
    return x.repeat(2, axis=2).repeat(2, axis=3)


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0, out=x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def forward_batch(weights: WeightBundle, patches: np.ndarray) -> np.ndarray:
    """Forward pass on a batch of (N, 2, 64, 64) patches -> (N, 64, 64)
    probabilities in (0, 1)."""
    x = np.asarray(patches, dtype=np.float32)
    if x.ndim != 4 or x.shape[1:] != (IN_CHANNELS, PATCH, PATCH):
        raise ValueError(f"expected (N, {IN_CHANNELS}, {PATCH}, {PATCH}) input, got {x.shape}")
    x = np.ascontiguousarray(x.transpose(1, 0, 2, 3))  # channel-first internally
    t = weights.tensors

    def block(x, name):
        x = _relu(_conv3x3(x, t[f"{name}.conv1.kernel"], t[f"{name}.conv1.bias"]))
        return _relu(_conv3x3(x, t[f"{name}.conv2.kernel"], t[f"{name}.conv2.bias"]))

    skips = []
    levels = len(ENCODER_WIDTHS)
    for level in range(1, levels + 1):
        x = block(x, f"enc{level}")
        if level < levels:
            skips.append(x)
            x = _maxpool2(x)
    for level in range(levels - 1, 0, -1):
        x = np.concatenate([_upsample2(x), skips.pop()], axis=0)
        x = block(x, f"dec{level}")
    x = _conv1x1(x, t["out.conv.kernel"], t["out.conv.bias"])
    return _sigmoid(x[0])


def forward(weights: WeightBundle, patch: np.ndarray) -> np.ndarray:
    """Forward pass on a single (2, 64, 64) patch -> (64, 64) probabilities."""
    return forward_batch(weights, np.asarray(patch)[None])[0]


def normalize_pair(spatial: np.ndarray, temporal: np.ndarray) -> np.ndarray:
    """Robust per-channel scaling to [0, 1] by the 1st/99th percentiles;
    a constant channel maps to all zeros."""
    out = np.empty((2,) + spatial.shape, dtype=np.float32)
    for i, channel in enumerate((spatial, temporal)):
        p1, p99 = np.percentile(channel, (1, 99))
        if p99 <= p1:
            out[i] = 0.0
        else:
            out[i] = np.clip((channel - p1) / (p99 - p1), 0.0, 1.0)
    return out


def _tile_positions(extent: int, stride: int) -> list[int]:
    pos = list(range(0, extent - PATCH + 1, stride))
    if pos[-1] != extent - PATCH:
        pos.append(extent - PATCH)
    return pos


def _tent_weights() -> np.ndarray:
    ramp = 1.0 - np.abs(np.arange(PATCH) - (PATCH - 1) / 2.0) / (PATCH / 2.0)
    win = np.outer(ramp, ramp)
    return np.maximum(win, MERGE_WEIGHT_FLOOR).astype(np.float32)


def tile_and_merge(
    weights: WeightBundle,
    normalized: np.ndarray,
    segment_index: int = 0,
    stride: int = DEFAULT_STRIDE,
) -> ProbabilityMap:
    """Run the net over sliding 64x64 patches and blend outputs with
    center-peaked tent weights into one frame-sized probability map.

    Frames smaller than 64 in either dimension are reflect-padded up to 64
    and the result is cropped back.
    """
    c, h, w = normalized.shape
    pad_y, pad_x = max(0, PATCH - h), max(0, PATCH - w)
    img = normalized
    if pad_y or pad_x:
        img = np.pad(normalized, ((0, 0), (0, pad_y), (0, pad_x)), mode="reflect")
    _, ph, pw = img.shape
    ys = _tile_positions(ph, stride)
    xs = _tile_positions(pw, stride)
    patches = np.stack([img[:, y:y + PATCH, x:x + PATCH] for y in ys for x in xs])
    probs = forward_batch(weights, patches)

    tent = _tent_weights()
    acc = np.zeros((ph, pw), dtype=np.float64)
    norm = np.zeros((ph, pw), dtype=np.float64)
    i = 0
    for y in ys:
        for x in xs:
            acc[y:y + PATCH, x:x + PATCH] += probs[i] * tent
            norm[y:y + PATCH, x:x + PATCH] += tent
            i += 1
    merged = (acc / norm).astype(np.float32)[:h, :w]
    return ProbabilityMap(segment_index, np.clip(merged, 0.0, 1.0))


def save_weights(bundle: WeightBundle, path: str | Path) -> None:
    """Serialize to the VSEGW1 binary format (little-endian, f32 values)."""
    bundle.validate()
    parts = [WEIGHT_MAGIC, struct.pack("<I", len(bundle.tensors))]
    fp = bundle.fingerprint.encode()
    parts.append(struct.pack("<I", len(fp)) + fp)
    for name, _ in architecture():
        arr = np.ascontiguousarray(bundle.tensors[name], dtype="<f4")
        nb = name.encode()
        parts.append(struct.pack("<I", len(nb)) + nb)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_weights(path: str | Path) -> WeightBundle:
    """Read and validate a VSEGW1 weight file."""
    raw = Path(path).read_bytes()
    off = 0

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(raw):
            raise WeightFormatError(f"{path}: truncated reading {what} at byte {off}")
        chunk = raw[off:off + n]
        off += n
        return chunk

    if take(8, "magic") != WEIGHT_MAGIC:
        raise WeightFormatError(f"{path}: bad magic bytes")
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    (fplen,) = struct.unpack("<I", take(4, "fingerprint length"))
    fingerprint = take(fplen, "fingerprint").decode()
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4, "name length"))
        name = take(nlen, "tensor name").decode()
        (ndim,) = struct.unpack("<I", take(4, f"ndim of {name}"))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, f"dims of {name}"))
        nbytes = 4 * int(np.prod(shape))
        values = np.frombuffer(take(nbytes, f"values of {name}"), dtype="<f4")
        tensors[name] = values.reshape(shape).copy()
    if off != len(raw):
        raise WeightFormatError(f"{path}: {len(raw) - off} trailing bytes at byte {off}")
    bundle = WeightBundle(tensors, fingerprint)
    bundle.validate()
    return bundle
