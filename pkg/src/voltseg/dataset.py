"""Patch-dataset generation for training the segmentation network.

Each synthetic video is motion-corrected and summarized, then 64x64
input/target patch pairs are sampled from every summary pair. Inputs are
the percentile-normalized (spatial, temporal) channels; targets are the
ground-truth spiking-pixel masks for the segment.

Layout written under out_dir:
    videos/<index>/video.vsegv1, gt.json, footprints.tif, segmask.tif
    patches.bin    float32 LE, (N, 2, 64, 64)
    labels.bin     uint8, (N, 64, 64), 0/1
    manifest.json  patch index, source video/pair, crop origin, split tag
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from voltseg.motion import MotionConfig, correct_motion
from voltseg.simulate import SceneConfig, generate_video_dir, synthesize
from voltseg.summarize import summarize
from voltseg.unet import PATCH, normalize_pair

VALIDATION_FRACTION = 0.2


def expected_patch_count(n_videos: int, frames: int, segment_length: int,
                         patches_per_pair: int) -> int:
    pairs = -(-frames // segment_length)
    return n_videos * pairs * patches_per_pair


def generate_training_set(
    out_dir: str | Path,
    n_videos: int = 1000,
    patches_per_pair: int = 10,
    scene: SceneConfig | None = None,
    save_videos: bool = True,
) -> dict:
    """Generate the labeled patch dataset; returns the manifest dict.

    Half of the sampled patches are forced to contain at least one spiking
    pixel (when any exist), the rest are uniform, so both classes appear.
    Every video uses seed scene.seed + video index.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene = scene or SceneConfig()
    entries = []
    index = 0
    split_rng = np.random.default_rng(scene.seed + 987654321)

    with open(out_dir / "patches.bin", "wb") as f_in, \
            open(out_dir / "labels.bin", "wb") as f_out:
        for vid in range(n_videos):
            cfg = replace(scene, seed=scene.seed + vid)
            if save_videos:
                video, gt = generate_video_dir(cfg, out_dir / "videos" / f"{vid:04d}")
            else:
                video, gt = synthesize(cfg)
            corrected, _ = correct_motion(video, MotionConfig(search_radius=max(1, cfg.motion_amplitude)))
            pairs = summarize(corrected, cfg.segment_length)
            rng = np.random.default_rng(cfg.seed + 1)
            for pair in pairs:
                channels = normalize_pair(pair.spatial, pair.temporal)
                target = gt.segment_masks[pair.segment_index].bits
                for k in range(patches_per_pair):
                    y, x = _sample_origin(rng, target, biased=(k % 2 == 0))
                    f_in.write(np.ascontiguousarray(
                        channels[:, y:y + PATCH, x:x + PATCH], dtype="<f4").tobytes())
                    f_out.write(target[y:y + PATCH, x:x + PATCH]
                                .astype(np.uint8).tobytes())
                    entries.append({
                        "index": index,
                        "video": vid,
                        "pair": pair.segment_index,
                        "x": int(x),
                        "y": int(y),
                        "split": "val" if split_rng.random() < VALIDATION_FRACTION else "train",
                    })
                    index += 1

    manifest = {
        "patch_count": index,
        "patch_size": PATCH,
        "channels": 2,
        "entries": entries,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest))
    return manifest


def _sample_origin(rng: np.random.Generator, target: np.ndarray, biased: bool) -> tuple[int, int]:
    h, w = target.shape
    max_y, max_x = h - PATCH, w - PATCH
    if biased:
        ys, xs = np.nonzero(target)
        if len(ys) > 0:
            i = rng.integers(len(ys))
            y = int(np.clip(ys[i] - rng.integers(PATCH), 0, max_y))
            x = int(np.clip(xs[i] - rng.integers(PATCH), 0, max_x))
            return y, x
    return int(rng.integers(max_y + 1)), int(rng.integers(max_x + 1))


def load_patches(dataset_dir: str | Path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Read patches.bin / labels.bin back as arrays plus the manifest."""
    dataset_dir = Path(dataset_dir)
    manifest = json.loads((dataset_dir / "manifest.json").read_text())
    n, p = manifest["patch_count"], manifest["patch_size"]
    inputs = np.fromfile(dataset_dir / "patches.bin", dtype="<f4").reshape(n, 2, p, p)
    labels = np.fromfile(dataset_dir / "labels.bin", dtype=np.uint8).reshape(n, p, p)
    return inputs, labels, manifest
