import numpy as np
import pytest

from voltseg.dataset import (
    expected_patch_count,
    generate_training_set,
    load_patches,
)
from voltseg.simulate import SceneConfig


def test_expected_patch_count():
    assert expected_patch_count(1000, 1000, 50, 10) == 200_000
    assert expected_patch_count(2, 101, 50, 4) == 24


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    scene = SceneConfig(frames=100, seed=77, motion_amplitude=2)
    manifest = generate_training_set(out, n_videos=2, patches_per_pair=4,
                                     scene=scene, save_videos=True)
    return out, scene, manifest


class TestGeneration:
    def test_patch_count(self, dataset):
        out, scene, manifest = dataset
        assert manifest["patch_count"] == expected_patch_count(
            2, scene.frames, scene.segment_length, 4)

    def test_round_trip_shapes(self, dataset):
        out, _, manifest = dataset
        inputs, labels, loaded = load_patches(out)
        n = manifest["patch_count"]
        assert inputs.shape == (n, 2, 64, 64)
        assert labels.shape == (n, 64, 64)
        assert inputs.dtype == np.float32
        assert set(np.unique(labels)) <= {0, 1}
        assert loaded["patch_count"] == n

    def test_inputs_normalized(self, dataset):
        inputs, _, _ = load_patches(dataset[0])
        assert inputs.min() >= 0.0 and inputs.max() <= 1.0

    def test_manifest_entries_reference_crops(self, dataset):
        out, _, manifest = dataset
        for entry in manifest["entries"]:
            assert 0 <= entry["x"] <= 128 - 64
            assert 0 <= entry["y"] <= 128 - 64
            assert entry["video"] in (0, 1)
            assert entry["split"] in ("train", "val")

    def test_split_fractions_reasonable(self, dataset):
        _, _, manifest = dataset
        splits = [e["split"] for e in manifest["entries"]]
        frac = splits.count("val") / len(splits)
        assert 0.05 < frac < 0.4

    def test_videos_written(self, dataset):
        out, _, _ = dataset
        assert (out / "videos" / "0000" / "video.vsegv1").exists()
        assert (out / "videos" / "0001" / "gt.json").exists()

    def test_biased_sampling_yields_positive_pixels(self, dataset):
        _, _, manifest = dataset
        _, labels, _ = load_patches(dataset[0])
        assert labels.sum() > 0  # spiking pixels present in the set

    def test_deterministic_regeneration(self, tmp_path, dataset):
        out, scene, manifest = dataset
        regen = generate_training_set(tmp_path, n_videos=2, patches_per_pair=4,
                                      scene=scene, save_videos=False)
        assert regen["entries"] == manifest["entries"]
        a, _, _ = load_patches(out)
        b, _, _ = load_patches(tmp_path)
        np.testing.assert_array_equal(a, b)
