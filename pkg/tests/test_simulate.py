import json

import numpy as np
import pytest

from voltseg.simulate import (
    SceneConfig,
    generate_video_dir,
    save_ground_truth,
    synthesize,
)
from voltseg.video_io import load_masks, load_video


class TestSceneConfig:
    def test_rejects_small_frames(self):
        with pytest.raises(ValueError):
            SceneConfig(height=32)

    def test_rejects_bad_neuron_range(self):
        with pytest.raises(ValueError):
            SceneConfig(neuron_count=(8, 4))

    def test_rejects_bad_radius_range(self):
        with pytest.raises(ValueError):
            SceneConfig(neuron_radius=(0.0, 5.0))


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        cfg = SceneConfig(frames=60, seed=3)
        v1, g1 = synthesize(cfg)
        v2, g2 = synthesize(cfg)
        np.testing.assert_array_equal(v1.data, v2.data)
        np.testing.assert_array_equal(g1.motion, g2.motion)
        assert len(g1.footprints) == len(g2.footprints)
        for a, b in zip(g1.spike_times, g2.spike_times):
            np.testing.assert_array_equal(a, b)

    def test_different_seeds_differ(self):
        v1, _ = synthesize(SceneConfig(frames=30, seed=1))
        v2, _ = synthesize(SceneConfig(frames=30, seed=2))
        assert not np.array_equal(v1.data, v2.data)


@pytest.fixture(scope="module")
def scene():
    cfg = SceneConfig(frames=150, seed=5)
    video, gt = synthesize(cfg)
    return cfg, video, gt


class TestGroundTruthConsistency:
    def test_video_dimensions(self, scene):
        cfg, video, _ = scene
        assert video.data.shape == (150, 128, 128)
        assert video.frame_rate == cfg.frame_rate

    def test_neuron_count_in_range(self, scene):
        cfg, _, gt = scene
        assert cfg.neuron_count[0] <= len(gt.footprints) <= cfg.neuron_count[1]

    def test_footprints_within_frame_and_plausible_size(self, scene):
        cfg, _, gt = scene
        r_max = cfg.neuron_radius[1]
        for fp in gt.footprints:
            assert fp.bits.shape == (128, 128)
            area = fp.area
            assert np.pi * cfg.neuron_radius[0] ** 2 * 0.5 <= area
            assert area <= np.pi * r_max ** 2 * 1.5

    def test_spike_times_within_video(self, scene):
        cfg, _, gt = scene
        for spikes in gt.spike_times:
            assert np.all((spikes >= 0) & (spikes < cfg.frames))

    def test_motion_bounds_and_settle(self, scene):
        cfg, _, gt = scene
        assert gt.motion.shape == (150, 2)
        np.testing.assert_array_equal(gt.motion[:cfg.motion_settle_frames], 0)
        assert np.abs(gt.motion).max() <= cfg.motion_amplitude
        # Random walk: consecutive steps differ by at most 1 per axis.
        assert np.abs(np.diff(gt.motion, axis=0)).max() <= 1

    def test_segment_masks_are_spiking_union(self, scene):
        cfg, _, gt = scene
        n_seg = -(-cfg.frames // cfg.segment_length)
        assert len(gt.segment_masks) == n_seg
        for i in range(n_seg):
            lo, hi = i * cfg.segment_length, (i + 1) * cfg.segment_length
            expected = np.zeros((128, 128), dtype=bool)
            for j, spikes in enumerate(gt.spike_times):
                if np.any((spikes >= lo) & (spikes < hi)):
                    expected |= gt.footprints[j].bits
            np.testing.assert_array_equal(gt.segment_masks[i].bits, expected)

    def test_spikes_brighten_neuron_pixels(self):
        cfg = SceneConfig(frames=200, seed=9, motion_amplitude=0,
                          noise_level=0.0)
        video, gt = synthesize(cfg)
        for j, spikes in enumerate(gt.spike_times):
            if len(spikes) == 0:
                continue
            inside = gt.footprints[j].bits
            rest = np.setdiff1d(np.arange(200), spikes)
            spike_mean = video.data[spikes][:, inside].mean()
            quiet_mean = video.data[rest][:, inside].mean()
            assert spike_mean > quiet_mean

    def test_frames_track_ground_truth_motion(self):
        cfg = SceneConfig(frames=120, seed=4, noise_level=0.0)
        video, gt = synthesize(cfg)
        base = video.data[0]
        for t in (80, 119):
            dx, dy = gt.motion[t]
            h, w = base.shape
            m = cfg.motion_amplitude + 1
            shifted = base[m - dy:h - m - dy, m - dx:w - m - dx]
            np.testing.assert_allclose(video.data[t][m:h - m, m:w - m],
                                       shifted, atol=1e-4)


class TestArtifacts:
    def test_generate_video_dir_layout(self, tmp_path):
        cfg = SceneConfig(frames=60, seed=2)
        video, gt = generate_video_dir(cfg, tmp_path / "v")
        loaded = load_video(tmp_path / "v" / "video.vsegv1")
        np.testing.assert_array_equal(loaded.data, video.data)
        masks = load_masks(tmp_path / "v" / "footprints.tif")
        assert len(masks) == len(gt.footprints)
        seg = load_masks(tmp_path / "v" / "segmask.tif")
        assert len(seg) == len(gt.segment_masks)
        payload = json.loads((tmp_path / "v" / "gt.json").read_text())
        assert payload["motion"] == gt.motion.tolist()
        assert len(payload["spike_times"]) == len(gt.spike_times)

    def test_save_ground_truth_round_trip(self, tmp_path):
        _, gt = synthesize(SceneConfig(frames=60, seed=8))
        save_ground_truth(gt, tmp_path)
        masks = load_masks(tmp_path / "footprints.tif")
        for a, b in zip(masks, gt.footprints):
            np.testing.assert_array_equal(a.bits, b.bits)
