"""Backend parity: the compiled search kernel against the numpy fallback."""

import numpy as np
import pytest

from voltseg import kernels
from voltseg.motion import PatchGrid, zncc


@pytest.mark.skipif(not kernels.HAVE_NATIVE, reason="compiled extension not built")
class TestNativeParity:
    @pytest.mark.parametrize("radius", [1, 3, 5, 10, 12])
    def test_backends_agree(self, rng, radius):
        frame = rng.random((128, 128), dtype=np.float32)
        ref = rng.random((128, 128), dtype=np.float32)
        grid = PatchGrid.cover(128, 128, 21, margin=radius)
        a = kernels._native.mean_zncc_scores(frame, ref, grid.origins, 21, radius)
        b = kernels.mean_zncc_scores_py(frame, ref, grid.origins, 21, radius)
        np.testing.assert_allclose(a, b, atol=1e-4)

    def test_native_origin_bounds_checked(self, rng):
        frame = rng.random((64, 64), dtype=np.float32)
        origins = np.array([[0, 0]], dtype=np.int32)
        with pytest.raises(ValueError, match="border"):
            kernels._native.mean_zncc_scores(frame, frame, origins, 21, 5)

    def test_native_dimension_mismatch(self, rng):
        a = rng.random((64, 64), dtype=np.float32)
        b = rng.random((64, 60), dtype=np.float32)
        origins = np.array([[10, 10]], dtype=np.int32)
        with pytest.raises(ValueError, match="differ"):
            kernels._native.mean_zncc_scores(a, b, origins, 21, 5)


class TestScoreSemantics:
    """Both backends must match a per-candidate brute-force mean ZNCC."""

    @pytest.mark.parametrize("backend", sorted(kernels._backends))
    def test_matches_brute_force(self, rng, backend):
        frame = rng.random((60, 60), dtype=np.float32)
        ref = rng.random((60, 60), dtype=np.float32)
        origins = np.array([[10, 12], [25, 20]], dtype=np.int32)
        patch, radius = 15, 3
        fn = kernels._backends[backend]
        scores = fn(frame, ref, origins, patch, radius)
        for dy in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                vals = []
                for x, y in origins:
                    win = frame[y + dy:y + dy + patch, x + dx:x + dx + patch]
                    vals.append(zncc(win, ref[y:y + patch, x:x + patch]))
                assert scores[dy + radius, dx + radius] == pytest.approx(
                    np.mean(vals), abs=1e-4)

    @pytest.mark.parametrize("backend", sorted(kernels._backends))
    def test_constant_patch_contributes_zero(self, backend):
        frame = np.full((40, 40), 2.0, dtype=np.float32)
        ref = np.full((40, 40), 7.0, dtype=np.float32)
        origins = np.array([[10, 10]], dtype=np.int32)
        scores = kernels._backends[backend](frame, ref, origins, 11, 2)
        np.testing.assert_array_equal(scores, 0.0)

    def test_dispatch_uses_selected_backend(self, rng):
        frame = rng.random((50, 50), dtype=np.float32)
        origins = np.array([[12, 12]], dtype=np.int32)
        out = kernels.mean_zncc_scores(frame, frame, origins, 15, 2)
        assert out.shape == (5, 5)
        assert out[2, 2] == pytest.approx(1.0, abs=1e-5)
