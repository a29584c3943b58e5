"""Backend selection for the hot ZNCC search kernel.

The compiled extension (voltseg._native) is used when available; otherwise
a vectorized numpy fallback with identical semantics is selected. Override
with VOLTSEG_BACKEND=native|python.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from voltseg import _native

    HAVE_NATIVE = True
except ImportError:  # pragma: no cover - build-dependent
    _native = None
    HAVE_NATIVE = False


def mean_zncc_scores_py(
    frame: np.ndarray,
    reference: np.ndarray,
    origins: np.ndarray,
    patch: int,
    radius: int,
) -> np.ndarray:
    """Numpy fallback for the candidate-offset mean-ZNCC search.

    Same contract as the native kernel: returns a (2r+1, 2r+1) float64
    score grid indexed [dy+radius, dx+radius].
    """
    h, w = frame.shape
    if reference.shape != frame.shape:
        raise ValueError("frame and reference dimensions differ")
    origins = np.asarray(origins, dtype=np.int64)
    xs, ys = origins[:, 0], origins[:, 1]
    if (xs.min() - radius < 0 or ys.min() - radius < 0
            or (xs + patch + radius).max() > w or (ys + patch + radius).max() > h):
        raise ValueError("patch origin too close to border for search radius")

    f = frame.astype(np.float64)
    r = reference.astype(np.float64)
    n = float(patch * patch)
    sat_f = _sat(f)
    sat_f2 = _sat(f * f)

    ref_patches = np.stack([r[y:y + patch, x:x + patch] for x, y in origins])
    rsum = ref_patches.sum(axis=(1, 2))
    rvar = (ref_patches * ref_patches).sum(axis=(1, 2)) - rsum * rsum / n
    live = rvar > 0

    side = 2 * radius + 1
    scores = np.zeros((side, side))
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            # Elementwise product of reference with the shifted frame, then
            # per-patch sums via one summed-area table.
            prod = np.zeros_like(f)
            prod[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)] = (
                r[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
                * f[max(0, dy):h + min(0, dy), max(0, dx):w + min(0, dx)]
            )
            sat_p = _sat(prod)
            cross = _rect(sat_p, xs, ys, patch)
            fsum = _rect(sat_f, xs + dx, ys + dy, patch)
            fvar = _rect(sat_f2, xs + dx, ys + dy, patch) - fsum * fsum / n
            cov = cross - fsum * rsum / n
            ok = live & (fvar > 0)
            z = np.zeros(len(origins))
            z[ok] = cov[ok] / np.sqrt(fvar[ok] * rvar[ok])
            scores[dy + radius, dx + radius] = z.sum() / len(origins)
    return scores


def _sat(img: np.ndarray) -> np.ndarray:
    out = np.zeros((img.shape[0] + 1, img.shape[1] + 1))
    np.cumsum(np.cumsum(img, axis=0), axis=1, out=out[1:, 1:])
    return out


def _rect(sat: np.ndarray, x0, y0, size: int) -> np.ndarray:
    return (sat[y0 + size, x0 + size] - sat[y0, x0 + size]
            - sat[y0 + size, x0] + sat[y0, x0])


_backends = {"python": mean_zncc_scores_py}
if HAVE_NATIVE:
    _backends["native"] = _native.mean_zncc_scores

BACKEND = os.environ.get("VOLTSEG_BACKEND", "native" if HAVE_NATIVE else "python")
if BACKEND not in _backends:
    raise ImportError(f"VOLTSEG_BACKEND={BACKEND!r} unavailable (have: {sorted(_backends)})")


def mean_zncc_scores(frame, reference, origins, patch, radius):
    """Dispatch to the selected backend (see BACKEND)."""
    if BACKEND == "native":
        return _native.mean_zncc_scores(
            np.ascontiguousarray(frame, dtype=np.float32),
            np.ascontiguousarray(reference, dtype=np.float32),
            np.ascontiguousarray(origins, dtype=np.int32),
            patch,
            radius,
        )
    return mean_zncc_scores_py(frame, reference, origins, patch, radius)
