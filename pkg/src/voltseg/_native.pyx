# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernel: mean patch ZNCC over a grid of candidate offsets.

Per-patch window statistics come from summed-area tables of the frame, so
only the cross term is an explicit loop. The GIL is released during the
search, allowing frame-level thread parallelism from Python.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef extern from "_native_impl.h":
    int VSEG_MAX_SIDE
    void vseg_cross_sums(const float *frame, const float *ref, int w,
                         int px, int py, int fy0, int patch, int side,
                         float *acc) nogil


def mean_zncc_scores(
    cnp.float32_t[:, ::1] frame,
    cnp.float32_t[:, ::1] reference,
    cnp.int32_t[:, ::1] origins,
    int patch,
    int radius,
):
    """Mean ZNCC of frame windows at origin+(dx,dy) against reference patches.

    Returns a (2*radius+1, 2*radius+1) float64 array indexed [dy+radius,
    dx+radius]. Zero-variance windows contribute a ZNCC of 0.
    """
    cdef int h = frame.shape[0]
    cdef int w = frame.shape[1]
    cdef int n_pat = origins.shape[0]
    cdef int side = 2 * radius + 1
    cdef int px, py, i
    if reference.shape[0] != h or reference.shape[1] != w:
        raise ValueError("frame and reference dimensions differ")
    for i in range(n_pat):
        px = origins[i, 0]
        py = origins[i, 1]
        if (px - radius < 0 or py - radius < 0
                or px + patch + radius > w or py + patch + radius > h):
            raise ValueError("patch origin too close to border for search radius")

    scores = np.zeros((side, side), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = scores

    # Summed-area tables of the frame and its square, one guard row/col.
    sat = np.empty((h + 1, w + 1), dtype=np.float64)
    sat2 = np.empty((h + 1, w + 1), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] s1 = sat
    cdef cnp.float64_t[:, ::1] s2 = sat2
    cdef int x, y
    cdef double rowsum, rowsum2

    cdef double n = <double> (patch * patch)
    cdef double rsum, rvar, v
    cdef double fsum, fvar, cov, denom
    cdef int dy, dx, yy, xx, fy0, fx0
    # Local accumulator (one slot per dx); capped so it stays on the stack.
    cdef float acc[63]
    if side > 63:
        raise ValueError("search radius too large (max 31)")

    with nogil:
        for x in range(w + 1):
            s1[0, x] = 0.0
            s2[0, x] = 0.0
        for y in range(h):
            s1[y + 1, 0] = 0.0
            s2[y + 1, 0] = 0.0
            rowsum = 0.0
            rowsum2 = 0.0
            for x in range(w):
                v = frame[y, x]
                rowsum += v
                rowsum2 += v * v
                s1[y + 1, x + 1] = s1[y, x + 1] + rowsum
                s2[y + 1, x + 1] = s2[y, x + 1] + rowsum2

        for i in range(n_pat):
            px = origins[i, 0]
            py = origins[i, 1]
            # Reference patch sum and n*variance.
            rsum = 0.0
            rvar = 0.0
            for yy in range(py, py + patch):
                for xx in range(px, px + patch):
                    v = reference[yy, xx]
                    rsum += v
                    rvar += v * v
            rvar -= rsum * rsum / n
            if rvar <= 0.0:
                continue
            for dy in range(-radius, radius + 1):
                fy0 = py + dy
                # Cross sums for every dx at once (vectorized C helper).
                vseg_cross_sums(&frame[0, 0], &reference[0, 0], w,
                                px, py, fy0, patch, side, acc)
                for dx in range(-radius, radius + 1):
                    fx0 = px + dx
                    fsum = (s1[fy0 + patch, fx0 + patch] - s1[fy0, fx0 + patch]
                            - s1[fy0 + patch, fx0] + s1[fy0, fx0])
                    fvar = (s2[fy0 + patch, fx0 + patch] - s2[fy0, fx0 + patch]
                            - s2[fy0 + patch, fx0] + s2[fy0, fx0])
                    fvar -= fsum * fsum / n
                    if fvar <= 0.0:
                        continue
                    cov = <double> acc[dx + radius] - fsum * rsum / n
                    denom = (fvar * rvar) ** 0.5
                    out[dy + radius, dx + radius] += cov / denom
        for dy in range(side):
            for dx in range(side):
                out[dy, dx] /= n_pat
    return scores
