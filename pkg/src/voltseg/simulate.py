"""Synthetic voltage-imaging videos with full ground truth.

The generative model: elliptical neurons (optionally annular) with smooth
boundaries and Poisson spike trains, dark smooth vessel curves, a
multiplicative low-order polynomial illumination field, an integer
random-walk global translation per frame, and Gaussian plus
signal-dependent noise. Everything is deterministic given the seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from voltseg.video_io import MaskImage, Video, save_masks, save_video


@dataclass
class SceneConfig:
    height: int = 128
    width: int = 128
    frames: int = 1000
    frame_rate: float = 400.0
    neuron_count: tuple[int, int] = (4, 8)
    neuron_radius: tuple[float, float] = (5.0, 9.0)
    spike_rate_hz: float = 4.0
    spike_amplitude: float = 0.35  # dF/F fraction
    vessel_count: int = 2
    illumination_strength: float = 0.3
    noise_level: float = 0.10  # std as a fraction of baseline
    motion_amplitude: int = 5  # pixels
    motion_settle_frames: int = 50  # stationary lead-in before the walk starts
    segment_length: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.height < 64 or self.width < 64:
            raise ValueError("frame dimensions must be >= 64")
        if self.neuron_count[0] > self.neuron_count[1] or self.neuron_count[0] < 0:
            raise ValueError("invalid neuron count range")
        if self.neuron_radius[0] <= 0 or self.neuron_radius[0] > self.neuron_radius[1]:
            raise ValueError("invalid neuron radius range")


@dataclass
class GroundTruth:
    footprints: list[MaskImage]
    spike_times: list[np.ndarray]  # frame indices per neuron
    motion: np.ndarray  # (T, 2) of (dx, dy)
    segment_masks: list[MaskImage]  # union of spiking footprints per segment


class PlacementError(Exception):
    """Raised when neurons cannot be placed without excessive overlap."""


def _neuron_profile(cfg: SceneConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One neuron's soft intensity profile and its binary footprint."""
    h, w = cfg.height, cfg.width
    margin = cfg.neuron_radius[1] + cfg.motion_amplitude + 2
    cy = rng.uniform(margin, h - margin)
    cx = rng.uniform(margin, w - margin)
    ry = rng.uniform(*cfg.neuron_radius)
    rx = rng.uniform(*cfg.neuron_radius)
    angle = rng.uniform(0, np.pi)
    annular = rng.random() < 0.5
    yy, xx = np.mgrid[0:h, 0:w]
    dy, dx = yy - cy, xx - cx
    u = dx * np.cos(angle) + dy * np.sin(angle)
    v = -dx * np.sin(angle) + dy * np.cos(angle)
    r = np.sqrt((u / rx) ** 2 + (v / ry) ** 2)
    if annular:
        # Brighter rim around the soma boundary (donut-like appearance).
        profile = np.exp(-((r - 0.75) / 0.35) ** 2) * (r < 1.4)
    else:
        profile = np.clip(1.0 - r, 0.0, None) ** 0.5
    profile = ndimage.gaussian_filter(profile, 0.8)
    footprint = r <= 1.0
    return profile.astype(np.float32), footprint


def _vessel_layer(cfg: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    """Dark smooth random curves, multiplied into the background."""
    h, w = cfg.height, cfg.width
    layer = np.ones((h, w), dtype=np.float32)
    for _ in range(cfg.vessel_count):
        pts = max(4, w // 16)
        xs = np.linspace(0, w - 1, pts)
        ys = np.cumsum(rng.uniform(-h / 6, h / 6, size=pts)) + rng.uniform(0, h)
        path = np.zeros((h, w), dtype=np.float32)
        x_dense = np.arange(w)
        y_dense = np.interp(x_dense, xs, ys)
        if rng.random() < 0.5:
            x_dense, y_dense = y_dense, x_dense  # vertical-ish vessel
        xi = np.clip(np.round(x_dense).astype(int), 0, w - 1)
        yi = np.clip(np.round(y_dense).astype(int), 0, h - 1)
        path[yi, xi] = 1.0
        width_px = rng.uniform(0.8, 1.8)
        path = ndimage.gaussian_filter(path, width_px)
        if path.max() > 0:
            path /= path.max()
        depth = rng.uniform(0.3, 0.6)
        layer *= 1.0 - depth * path
    return layer


def _illumination(cfg: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    """Multiplicative low-order polynomial field around 1."""
    h, w = cfg.height, cfg.width
    y = np.linspace(-1, 1, h)[:, None]
    x = np.linspace(-1, 1, w)[None, :]
    coef = rng.uniform(-1, 1, size=5) * cfg.illumination_strength
    f = 1.0 + coef[0] * x + coef[1] * y + coef[2] * x * y + coef[3] * x * x + coef[4] * y * y
    return np.clip(f, 0.2, None).astype(np.float32)


def _spike_kernel(rng: np.random.Generator) -> np.ndarray:
    """Spike response: full amplitude then a 2-4 frame exponential-ish decay."""
    decay_len = rng.integers(2, 5)
    return np.concatenate([[1.0], np.exp(-np.arange(1, decay_len) * 1.2)])


def synthesize(cfg: SceneConfig) -> tuple[Video, GroundTruth]:
    """Render a labeled synthetic video; bit-deterministic given cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    h, w, t = cfg.height, cfg.width, cfg.frames

    n_neurons = int(rng.integers(cfg.neuron_count[0], cfg.neuron_count[1] + 1))
    profiles: list[np.ndarray] = []
    footprints: list[MaskImage] = []
    occupancy = np.zeros((h, w), dtype=bool)
    for _ in range(n_neurons):
        for attempt in range(50):
            profile, fp = _neuron_profile(cfg, rng)
            overlap = (fp & occupancy).sum()
            if overlap <= 0.5 * fp.sum():
                break
        else:
            raise PlacementError(
                f"could not place neuron {len(profiles)} of {n_neurons} "
                "without excessive overlap"
            )
        occupancy |= fp
        profiles.append(profile)
        footprints.append(MaskImage(fp))

    # Poisson spike trains and per-frame fluorescence gain per neuron.
    spike_prob = cfg.spike_rate_hz / cfg.frame_rate
    spike_times: list[np.ndarray] = []
    gains = np.ones((n_neurons, t), dtype=np.float32)
    for j in range(n_neurons):
        spikes = np.nonzero(rng.random(t) < spike_prob)[0]
        spike_times.append(spikes)
        kernel = _spike_kernel(rng)
        for s in spikes:
            end = min(t, s + len(kernel))
            gains[j, s:end] += cfg.spike_amplitude * kernel[:end - s]

    baseline = 100.0
    neuron_brightness = rng.uniform(0.25, 0.6, size=n_neurons) * baseline
    background = baseline * _vessel_layer(cfg, rng) * rng.uniform(0.8, 1.2)
    illumination = _illumination(cfg, rng)

    # Integer random walk clipped to the motion amplitude.
    motion = np.zeros((t, 2), dtype=np.int64)
    settle = min(cfg.motion_settle_frames, t)
    if cfg.motion_amplitude > 0 and settle < t:
        steps = rng.integers(-1, 2, size=(t - settle, 2))
        motion[settle:] = np.clip(np.cumsum(steps, axis=0),
                                  -cfg.motion_amplitude, cfg.motion_amplitude)

    static = background.copy()
    neuron_stack = np.stack(profiles) if n_neurons else np.zeros((0, h, w), np.float32)

    data = np.empty((t, h, w), dtype=np.float32)
    pad = cfg.motion_amplitude
    for frame in range(t):
        scene = static.copy()
        if n_neurons:
            scene += np.tensordot(neuron_brightness * gains[:, frame],
                                  neuron_stack, axes=1)
        scene *= illumination
        dx, dy = int(motion[frame, 0]), int(motion[frame, 1])
        if dx or dy:
            scene = _shift_int(scene, dx, dy)
        noise = rng.standard_normal((h, w)) * (cfg.noise_level * baseline)
        noise += rng.standard_normal((h, w)) * np.sqrt(np.clip(scene, 0, None)) * cfg.noise_level
        data[frame] = np.clip(scene + noise, 0.0, None)

    n_segments = (t + cfg.segment_length - 1) // cfg.segment_length
    segment_masks = []
    for i in range(n_segments):
        lo, hi = i * cfg.segment_length, (i + 1) * cfg.segment_length
        mask = np.zeros((h, w), dtype=bool)
        for j in range(n_neurons):
            if np.any((spike_times[j] >= lo) & (spike_times[j] < hi)):
                mask |= footprints[j].bits
        segment_masks.append(MaskImage(mask))

    gt = GroundTruth(footprints, spike_times, motion, segment_masks)
    return Video(data, frame_rate=cfg.frame_rate), gt


def _shift_int(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    h, w = img.shape
    ys = np.clip(np.arange(h) - dy, 0, h - 1)
    xs = np.clip(np.arange(w) - dx, 0, w - 1)
    return img[np.ix_(ys, xs)]


def save_ground_truth(gt: GroundTruth, directory: str | Path) -> None:
    directory = Path(directory)
    save_masks(gt.footprints, directory / "footprints.tif")
    save_masks(gt.segment_masks, directory / "segmask.tif")
    payload = {
        "spike_times": [s.tolist() for s in gt.spike_times],
        "motion": gt.motion.tolist(),
    }
    (directory / "gt.json").write_text(json.dumps(payload))


def generate_video_dir(cfg: SceneConfig, directory: str | Path) -> tuple[Video, GroundTruth]:
    """Render one video and write the per-video dataset layout."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    video, gt = synthesize(cfg)
    save_video(video, directory / "video.vsegv1")
    save_ground_truth(gt, directory)
    return video, gt
