import numpy as np
import pytest

from voltseg.simulate import SceneConfig, synthesize
from voltseg.video_io import Video

FIXTURES = __import__("pathlib").Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def small_video(rng):
    """Random 80x72 video, 120 frames, strictly positive."""
    data = rng.random((120, 80, 72), dtype=np.float32) + 0.1
    return Video(data, frame_rate=400.0)


@pytest.fixture(scope="session")
def sim_pair():
    """Small motion-free synthetic video with ground truth (session-cached)."""
    cfg = SceneConfig(frames=200, seed=11, motion_amplitude=0)
    return synthesize(cfg)
