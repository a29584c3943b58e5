import itertools
import json

import numpy as np
import pytest

from voltseg.evaluate import (
    MIN_STAGE_SECONDS,
    iou,
    match_and_score,
    save_overlay_png,
    throughput_report,
)
from voltseg.video_io import MaskImage


def _mask(h, w, rect):
    bits = np.zeros((h, w), dtype=bool)
    y0, x0, y1, x1 = rect
    bits[y0:y1, x0:x1] = True
    return MaskImage(bits)


class TestIou:
    def test_counting_oracle(self, rng):
        for _ in range(20):
            a = MaskImage(rng.random((16, 16)) > 0.5)
            b = MaskImage(rng.random((16, 16)) > 0.5)
            inter = int((a.bits & b.bits).sum())
            union = int((a.bits | b.bits).sum())
            expected = inter / union if union else 0.0
            assert iou(a, b) == pytest.approx(expected, abs=1e-12)

    def test_identical_masks(self):
        m = _mask(8, 8, (2, 2, 6, 6))
        assert iou(m, m) == 1.0

    def test_disjoint_masks(self):
        assert iou(_mask(8, 8, (0, 0, 3, 3)), _mask(8, 8, (5, 5, 8, 8))) == 0.0

    def test_both_empty_scores_zero(self):
        empty = MaskImage(np.zeros((4, 4), dtype=bool))
        assert iou(empty, empty) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            iou(_mask(4, 4, (0, 0, 2, 2)), _mask(5, 4, (0, 0, 2, 2)))


def _exhaustive_best_f1(mat, threshold):
    """Best F1 over all one-to-one assignments (small instances only)."""
    np_, ng = mat.shape
    best = 0.0
    for k in range(min(np_, ng) + 1):
        for rows in itertools.permutations(range(np_), k):
            for cols in itertools.combinations(range(ng), k):
                if all(mat[r, c] >= threshold for r, c in zip(rows, cols)):
                    tp = k
                    p = tp / np_ if np_ else 0.0
                    r = tp / ng if ng else 0.0
                    f1 = 2 * p * r / (p + r) if p + r else 0.0
                    best = max(best, f1)
    return best


class TestMatching:
    def test_perfect_match(self):
        masks = [_mask(16, 16, (0, 0, 5, 5)), _mask(16, 16, (8, 8, 14, 14))]
        report = match_and_score(masks, masks)
        assert report.f1 == 1.0
        assert report.matches == [(0, 0, 1.0), (1, 1, 1.0)]
        assert report.unmatched_preds == [] and report.unmatched_gts == []

    def test_no_predictions(self):
        report = match_and_score([], [_mask(8, 8, (0, 0, 4, 4))])
        assert report.precision == 0.0 and report.recall == 0.0
        assert report.f1 == 0.0
        assert report.unmatched_gts == [0]

    def test_no_ground_truth(self):
        report = match_and_score([_mask(8, 8, (0, 0, 4, 4))], [])
        assert report.precision == 0.0 and report.f1 == 0.0
        assert report.unmatched_preds == [0]

    def test_below_threshold_not_matched(self):
        a = _mask(16, 16, (0, 0, 4, 4))     # IoU with b = 4/28 ≈ 0.14
        b = _mask(16, 16, (2, 2, 6, 6))
        report = match_and_score([a], [b], threshold=0.3)
        assert report.matches == []
        assert report.f1 == 0.0

    def test_optimal_assignment_matches_exhaustive(self, rng):
        for trial in range(25):
            trial_rng = np.random.default_rng(trial)
            n_p, n_g = trial_rng.integers(1, 4, size=2)
            preds, gts = [], []
            for _ in range(n_p):
                y, x = trial_rng.integers(0, 10, size=2)
                preds.append(_mask(20, 20, (y, x, y + 8, x + 8)))
            for _ in range(n_g):
                y, x = trial_rng.integers(0, 10, size=2)
                gts.append(_mask(20, 20, (y, x, y + 8, x + 8)))
            mat = np.array([[iou(p, g) for g in gts] for p in preds])
            report = match_and_score(preds, gts, threshold=0.3)
            assert report.f1 == pytest.approx(
                _exhaustive_best_f1(mat, 0.3), abs=1e-9), f"trial {trial}"

    def test_greedy_suboptimal_case(self):
        # pred0 overlaps both gts; matching it to gt0 leaves gt1 for pred1.
        gt0 = _mask(32, 32, (0, 0, 8, 8))
        gt1 = _mask(32, 32, (4, 4, 12, 12))
        pred0 = _mask(32, 32, (2, 2, 10, 10))  # overlaps both
        pred1 = _mask(32, 32, (5, 5, 13, 13))  # only overlaps gt1 well
        report = match_and_score([pred0, pred1], [gt0, gt1], threshold=0.1)
        assert len(report.matches) == 2

    def test_report_json_fields(self):
        m = _mask(8, 8, (0, 0, 4, 4))
        payload = json.loads(match_and_score([m], [m]).to_json())
        assert payload["f1"] == 1.0
        assert payload["matches"][0]["iou"] == 1.0


class TestThroughput:
    def test_figure_arithmetic(self):
        report = throughput_report(
            10_000, {"motion": 5.5, "segment": 6.9, "trace": 0.1},
            target_fps=741.0)
        assert report.effective_fps == pytest.approx(800.0)
        assert report.realtime_ratio == pytest.approx(1.08, abs=0.01)

    def test_clamps_tiny_totals(self):
        report = throughput_report(100, {"motion": 1e-9})
        assert report.total_seconds == MIN_STAGE_SECONDS
        assert np.isfinite(report.effective_fps)

    def test_total_overrides_sum(self):
        report = throughput_report(100, {"a": 1.0, "b": 1.0}, total_seconds=1.5)
        assert report.total_seconds == 1.5  # overlapped stages

    def test_no_target_fps(self):
        report = throughput_report(100, {"a": 1.0})
        assert report.realtime_ratio is None
        assert report.effective_fps == pytest.approx(100.0)

    def test_json_round_trip(self):
        report = throughput_report(50, {"motion": 0.5}, target_fps=100.0)
        payload = json.loads(report.to_json())
        assert payload["frames"] == 50
        assert payload["realtime_ratio"] == pytest.approx(1.0)


class TestOverlay:
    def test_writes_png_with_expected_colors(self, tmp_path):
        from PIL import Image

        preds = [_mask(16, 16, (0, 0, 4, 4))]
        gts = [_mask(16, 16, (8, 8, 12, 12))]
        save_overlay_png(preds, gts, tmp_path / "o.png")
        rgb = np.asarray(Image.open(tmp_path / "o.png"))
        assert tuple(rgb[1, 1]) == (255, 0, 0)
        assert tuple(rgb[9, 9]) == (0, 255, 0)
        assert tuple(rgb[14, 14]) == (0, 0, 0)
