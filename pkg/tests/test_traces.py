import csv
import json

import numpy as np
import pytest

from voltseg.footprints import Footprint, FootprintSet
from voltseg.traces import Trace, dff, extract_all, extract_trace, save_traces_csv
from voltseg.video_io import MaskImage, Video


def _mask(h, w, pixels):
    bits = np.zeros((h, w), dtype=bool)
    for y, x in pixels:
        bits[y, x] = True
    return MaskImage(bits)


class TestExtractTrace:
    def test_matches_brute_force_mean(self, rng):
        video = Video(rng.random((40, 12, 14), dtype=np.float32), frame_rate=400.0)
        mask = _mask(12, 14, [(2, 3), (5, 7), (11, 0)])
        trace = extract_trace(video, mask, footprint_id=4)
        expected = [np.mean([video.data[t, 2, 3], video.data[t, 5, 7],
                             video.data[t, 11, 0]]) for t in range(40)]
        np.testing.assert_allclose(trace.samples, expected, atol=1e-6)
        assert trace.footprint_id == 4
        assert trace.frame_rate == 400.0

    def test_single_pixel_roi(self, rng):
        video = Video(rng.random((10, 6, 6), dtype=np.float32))
        trace = extract_trace(video, _mask(6, 6, [(3, 3)]))
        np.testing.assert_allclose(trace.samples, video.data[:, 3, 3], atol=1e-7)

    def test_empty_mask_rejected(self, rng):
        video = Video(rng.random((5, 6, 6), dtype=np.float32))
        with pytest.raises(ValueError, match="empty"):
            extract_trace(video, _mask(6, 6, []))

    def test_dimension_mismatch_rejected(self, rng):
        video = Video(rng.random((5, 6, 6), dtype=np.float32))
        with pytest.raises(ValueError, match="does not match"):
            extract_trace(video, _mask(7, 6, [(0, 0)]))


class TestExtractAll:
    def test_order_and_ids(self, rng):
        video = Video(rng.random((8, 10, 10), dtype=np.float32))
        masks = [_mask(10, 10, [(1, 1)]), _mask(10, 10, [(5, 5), (5, 6)])]
        fps = FootprintSet([
            Footprint(np.zeros((10, 10), np.float32), m, np.zeros(2), 0)
            for m in masks
        ])
        traces = extract_all(video, fps)
        assert [t.footprint_id for t in traces] == [0, 1]
        np.testing.assert_allclose(traces[0].samples, video.data[:, 1, 1],
                                   atol=1e-7)


class TestDff:
    def test_baseline_is_percentile(self, rng):
        samples = rng.random(200) + 1.0
        trace = Trace(0, samples)
        out = dff(trace, baseline_percentile=10.0)
        base = np.percentile(samples, 10.0)
        np.testing.assert_allclose(out.samples, (samples - base) / base,
                                   atol=1e-9)

    def test_zero_baseline_rejected(self):
        with pytest.raises(ValueError, match="baseline"):
            dff(Trace(0, np.zeros(10)))


class TestCsv:
    def test_round_trip(self, tmp_path):
        traces = [Trace(0, np.array([1.0, 2.0, 3.0]), 400.0),
                  Trace(1, np.array([4.0, 5.0, 6.0]), 400.0)]
        save_traces_csv(traces, tmp_path / "t.csv")
        rows = list(csv.reader((tmp_path / "t.csv").open()))
        assert rows[0] == ["frame", "0", "1"]
        assert rows[2] == ["1", "2.000000", "5.000000"]
        sidecar = json.loads((tmp_path / "t.json").read_text())
        assert sidecar["frame_rate"] == 400.0

    def test_empty_trace_list(self, tmp_path):
        save_traces_csv([], tmp_path / "t.csv")
        rows = list(csv.reader((tmp_path / "t.csv").open()))
        assert rows == [["frame"]]
