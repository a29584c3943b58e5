"""Turn the per-segment probability maps into demixed neuron footprints.

Maps are thresholded, shape-filtered, OR-aggregated into one mask, and each
8-connected component is demixed by a small multiplicative-update NMF over
the component's pixels-by-segments probability matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from skimage import measure

from voltseg.unet import ProbabilityMap
from voltseg.video_io import MaskImage, save_masks

NMF_SEED = 12345
_EPS = 1e-12


@dataclass
class FootprintConfig:
    threshold: float = 0.5
    min_area: int = 40
    max_area: int = 2000
    min_solidity: float = 0.8
    max_eccentricity: float = 0.95
    max_rank: int = 3
    nmf_max_iters: int = 200
    nmf_tol: float = 1e-4
    merge_iou: float = 0.6


@dataclass(frozen=True)
class RegionStats:
    area: int
    solidity: float
    eccentricity: float


@dataclass
class Footprint:
    weights: np.ndarray  # (H, W) >= 0, nonzero only on the source component
    mask: MaskImage
    activity: np.ndarray  # (K,) >= 0
    component: int


@dataclass
class FootprintSet:
    footprints: list[Footprint] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.footprints)

    def masks(self) -> list[MaskImage]:
        return [f.mask for f in self.footprints]


def binarize_map(pmap: ProbabilityMap, threshold: float = 0.5) -> MaskImage:
    """Pixel is set iff probability >= threshold (inclusive)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return MaskImage(pmap.values >= threshold)


def region_stats(region_mask: np.ndarray) -> RegionStats:
    """Area, solidity, and second-moment eccentricity of a single region."""
    props = measure.regionprops(region_mask.astype(np.uint8))[0]
    return RegionStats(int(props.area), float(props.solidity), float(props.eccentricity))


def filter_regions(
    mask: MaskImage,
    min_area: int = 40,
    max_area: int = 2000,
    min_solidity: float = 0.8,
    max_eccentricity: float = 0.95,
) -> MaskImage:
    """Keep only 8-connected regions whose shape is plausible for a neuron."""
    labels = measure.label(mask.bits, connectivity=2)
    keep = np.zeros_like(mask.bits)
    for props in measure.regionprops(labels):
        if not min_area <= props.area <= max_area:
            continue
        if props.solidity < min_solidity:
            continue
        if props.eccentricity > max_eccentricity:
            continue
        keep[labels == props.label] = True
    return MaskImage(keep)


def aggregate_masks(masks: list[MaskImage]) -> MaskImage:
    """Pixelwise OR across the per-segment masks."""
    if not masks:
        raise ValueError("no masks to aggregate")
    shape = masks[0].bits.shape
    out = np.zeros(shape, dtype=bool)
    for i, m in enumerate(masks):
        if m.bits.shape != shape:
            raise ValueError(f"mask {i} has shape {m.bits.shape}, expected {shape}")
        out |= m.bits
    return MaskImage(out)


def connected_components(mask: MaskImage) -> list[np.ndarray]:
    """8-connected components as boolean images, ordered by bounding-box
    (top, left)."""
    labels = measure.label(mask.bits, connectivity=2)
    comps = [(props.bbox[0], props.bbox[1], labels == props.label)
             for props in measure.regionprops(labels)]
    comps.sort(key=lambda c: (c[0], c[1]))
    return [c[2] for c in comps]


def nmf(
    p: np.ndarray,
    rank: int,
    max_iters: int = 200,
    tol: float = 1e-4,
    seed: int = NMF_SEED,
) -> tuple[np.ndarray, np.ndarray]:
    """Multiplicative-update NMF of the (M, K) non-negative matrix p into
    (M, rank) footprints and (rank, K) activities.

    Initialization is seeded uniform noise scaled so mean(F A) = mean(p);
    the Frobenius objective is non-increasing per iteration.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.min() < 0:
        raise ValueError("NMF input must be non-negative")
    m, k = p.shape
    if not 1 <= rank <= min(m, k):
        raise ValueError(f"rank {rank} outside [1, {min(m, k)}]")
    rng = np.random.default_rng(seed)
    f = rng.uniform(0.1, 1.0, size=(m, rank))
    a = rng.uniform(0.1, 1.0, size=(rank, k))
    mean_p = p.mean()
    if mean_p == 0:
        return np.zeros((m, rank)), np.zeros((rank, k))
    scale = np.sqrt(mean_p / (f @ a).mean())
    f *= scale
    a *= scale

    prev = np.linalg.norm(p - f @ a)
    for _ in range(max_iters):
        a *= (f.T @ p) / (f.T @ f @ a + _EPS)
        f *= (p @ a.T) / (f @ (a @ a.T) + _EPS)
        err = np.linalg.norm(p - f @ a)
        if prev > 0 and (prev - err) / prev < tol:
            prev = err
            break
        prev = err
    return f, a


def select_rank(p: np.ndarray, max_rank: int = 3, error_cutoff: float = 0.25,
                **nmf_kwargs) -> int:
    """Smallest rank whose relative Frobenius reconstruction error drops
    below the cutoff, else max_rank."""
    p = np.asarray(p, dtype=np.float64)
    norm_p = np.linalg.norm(p)
    if norm_p == 0:
        return 1
    limit = min(max_rank, min(p.shape))
    for rank in range(1, limit + 1):
        f, a = nmf(p, rank, **nmf_kwargs)
        if np.linalg.norm(p - f @ a) / norm_p < error_cutoff:
            return rank
    return limit


def _mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)


def reconstruct_footprints(
    maps: list[ProbabilityMap],
    config: FootprintConfig | None = None,
) -> FootprintSet:
    """Full reconstruction: threshold + shape-filter each map, OR them,
    then demix every connected component with rank-selected NMF."""
    if not maps:
        raise ValueError("need at least one probability map")
    config = config or FootprintConfig()
    cleaned = [
        filter_regions(
            binarize_map(m, config.threshold),
            config.min_area, config.max_area,
            config.min_solidity, config.max_eccentricity,
        )
        for m in maps
    ]
    combined = aggregate_masks(cleaned)
    h, w = combined.bits.shape
    stack = np.stack([m.values for m in maps])  # (K, H, W)

    result = FootprintSet()
    for comp_idx, comp in enumerate(connected_components(combined)):
        ys, xs = np.nonzero(comp)
        p = stack[:, ys, xs].T.astype(np.float64)  # (M, K)
        rank = select_rank(p, config.max_rank,
                           max_iters=config.nmf_max_iters, tol=config.nmf_tol)
        f, a = nmf(p, rank, config.nmf_max_iters, config.nmf_tol)
        candidates: list[Footprint] = []
        for j in range(rank):
            col = f[:, j]
            peak = col.max()
            if peak <= 0:
                continue
            weight_img = np.zeros((h, w), dtype=np.float32)
            weight_img[ys, xs] = col
            binary = weight_img >= 0.5 * peak
            binary = _largest_component(binary)
            stats_mask = MaskImage(binary)
            if filter_regions(stats_mask, config.min_area, config.max_area,
                              config.min_solidity, config.max_eccentricity).area == 0:
                continue
            candidates.append(Footprint(weight_img, stats_mask, a[j].copy(), comp_idx))
        result.footprints.extend(_merge_duplicates(candidates, config.merge_iou))
    return result


def _largest_component(binary: np.ndarray) -> np.ndarray:
    labels = measure.label(binary, connectivity=2)
    if labels.max() == 0:
        return binary
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == sizes.argmax()


def _merge_duplicates(candidates: list[Footprint], iou_cutoff: float) -> list[Footprint]:
    """Drop the smaller of any footprint pair with IoU above the cutoff."""
    order = sorted(range(len(candidates)),
                   key=lambda i: candidates[i].mask.area, reverse=True)
    kept: list[int] = []
    for i in order:
        if all(_mask_iou(candidates[i].mask.bits, candidates[j].mask.bits) <= iou_cutoff
               for j in kept):
            kept.append(i)
    kept.sort()
    return [candidates[i] for i in kept]


def save_footprints(footprints: FootprintSet, mask_path: str | Path,
                    manifest_path: str | Path) -> None:
    """Paged TIFF of ROI masks plus a JSON manifest."""
    save_masks(footprints.masks(), mask_path)
    entries = []
    for i, fp in enumerate(footprints.footprints):
        ys, xs = np.nonzero(fp.mask.bits)
        entries.append({
            "id": i,
            "component": fp.component,
            "bbox": [int(ys.min()), int(xs.min()), int(ys.max()) + 1, int(xs.max()) + 1],
            "area": fp.mask.area,
            "peak_activity_segment": int(np.argmax(fp.activity)),
        })
    Path(manifest_path).write_text(json.dumps({"footprints": entries}, indent=2))
