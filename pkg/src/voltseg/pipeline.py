"""Three-stage pipeline orchestration with segment-granular streaming.

Stage 1 motion-corrects frames, stage 2 summarizes each 50-frame segment
and runs the network to get a probability map, and stage 3 reconstructs
footprints and extracts traces once all maps are in. Stages 1 and 2
overlap through a bounded segment queue.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from voltseg import footprints as fp
from voltseg import motion as mc
from voltseg import summarize as sm
from voltseg import traces as tr
from voltseg import unet
from voltseg.evaluate import ThroughputReport, throughput_report
from voltseg.video_io import Video, load_video, save_video

MAX_SEGMENTS_IN_FLIGHT = 4


class ConfigError(Exception):
    """Bad pipeline configuration (unknown key, unparsable value)."""


@dataclass
class PipelineConfig:
    input_path: str = ""
    output_dir: str = "out"
    weights_path: str = ""
    segment_length: int = 50
    patch_size: int = 21
    search_radius: int = 10
    subpixel: bool = True
    smooth_sigma: float = 3.0
    unet_stride: int = 32
    probability_threshold: float = 0.5
    min_area: int = 40
    max_area: int = 2000
    min_solidity: float = 0.8
    max_eccentricity: float = 0.95
    nmf_max_rank: int = 3
    nmf_max_iters: int = 200
    nmf_tol: float = 1e-4
    stages: str = "motion,segment,trace"  # comma-separated toggles
    threads: int = 1
    streaming: bool = True
    save_corrected: bool = False
    save_probability_maps: bool = False

    def stage_set(self) -> set[str]:
        stages = {s.strip() for s in self.stages.split(",") if s.strip()}
        unknown = stages - {"motion", "segment", "trace"}
        if unknown:
            raise ConfigError(f"unknown stages: {sorted(unknown)}")
        return stages

    def motion_config(self) -> mc.MotionConfig:
        return mc.MotionConfig(self.patch_size, self.search_radius,
                               self.subpixel, self.threads)

    def footprint_config(self) -> fp.FootprintConfig:
        return fp.FootprintConfig(
            threshold=self.probability_threshold,
            min_area=self.min_area,
            max_area=self.max_area,
            min_solidity=self.min_solidity,
            max_eccentricity=self.max_eccentricity,
            max_rank=self.nmf_max_rank,
            nmf_max_iters=self.nmf_max_iters,
            nmf_tol=self.nmf_tol,
        )


_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False,
                "yes": True, "no": False}


def parse_config(text: str) -> PipelineConfig:
    """Parse the flat key = value config format; unknown keys are errors."""
    known = {f.name: f.type for f in fields(PipelineConfig)}
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw, known[key], lineno)
    return PipelineConfig(**values)


def _coerce(key: str, raw: str, typ: str, lineno: int):
    typ = str(typ)
    try:
        if "bool" in typ:
            return _BOOL_VALUES[raw.lower()]
        if "int" in typ:
            return int(raw)
        if "float" in typ:
            return float(raw)
        return raw
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"line {lineno}: bad value for {key!r}: {raw!r}") from exc


def load_config(path: str | Path) -> PipelineConfig:
    return parse_config(Path(path).read_text())


@dataclass
class PipelineResult:
    vectors: list = field(default_factory=list)
    probability_maps: list = field(default_factory=list)
    footprints: fp.FootprintSet | None = None
    traces: list = field(default_factory=list)
    throughput: ThroughputReport | None = None


class _StageTimer:
    """Accumulates wall time per stage across possibly-overlapping calls."""

    def __init__(self):
        self.seconds: dict[str, float] = {}
        self._lock = threading.Lock()

    def add(self, stage: str, dt: float) -> None:
        with self._lock:
            self.seconds[stage] = self.seconds.get(stage, 0.0) + dt


def run(config: PipelineConfig, video: Video | None = None,
        weights: unet.WeightBundle | None = None) -> PipelineResult:
    """Run the configured stages and write artifacts to output_dir."""
    stages = config.stage_set()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(config))

    if video is None:
        video = load_video(config.input_path)
    if weights is None and "segment" in stages:
        weights = unet.load_weights(config.weights_path)

    timer = _StageTimer()
    t_start = time.perf_counter()
    result = PipelineResult()

    corrected = _run_motion_and_segment(config, video, weights, stages, timer, result)

    if "trace" in stages and result.footprints is not None:
        t0 = time.perf_counter()
        result.traces = tr.extract_all(corrected, result.footprints)
        timer.add("trace", time.perf_counter() - t0)
        tr.save_traces_csv(result.traces, out / "traces.csv")

    total = time.perf_counter() - t_start
    result.throughput = throughput_report(
        video.frames, timer.seconds, video.frame_rate, total_seconds=total)
    (out / "throughput.json").write_text(result.throughput.to_json())

    if "motion" in stages:
        mc.save_motion_csv(result.vectors, out / "motion.csv")
        if config.save_corrected:
            save_video(corrected, out / "corrected.tif")
    if "segment" in stages and result.footprints is not None:
        fp.save_footprints(result.footprints, out / "footprints.tif",
                           out / "footprints.json")
        if config.save_probability_maps:
            import tifffile

            tifffile.imwrite(out / "probability_maps.tif",
                             np.stack([m.values for m in result.probability_maps]))
    return result


def _run_motion_and_segment(config, video, weights, stages, timer, result):
    """Stage 1 and stage 2, overlapped segment-by-segment when streaming."""
    do_motion = "motion" in stages
    do_segment = "segment" in stages
    length = config.segment_length
    n_frames = video.frames
    n_segments = -(-n_frames // length)

    if do_motion:
        reference = mc.make_reference(video)
        grid = mc.PatchGrid.cover(video.height, video.width, config.patch_size,
                                  margin=config.search_radius)
    corrected = np.empty_like(video.data) if do_motion else video.data
    vectors: list = [None] * n_frames

    def correct_segment(seg: int) -> None:
        t0 = time.perf_counter()
        lo, hi = seg * length, min((seg + 1) * length, n_frames)
        for t in range(lo, hi):
            v = mc.estimate_motion(video.data[t], reference, grid,
                                   config.search_radius, config.subpixel)
            vectors[t] = v
            corrected[t] = mc.correct_frame(video.data[t], v)
        timer.add("motion", time.perf_counter() - t0)

    maps: list = [None] * n_segments

    def segment_one(seg: int) -> None:
        t0 = time.perf_counter()
        lo, hi = seg * length, min((seg + 1) * length, n_frames)
        segment = sm.TimeSegment(seg, corrected[lo:hi], length)
        pair = sm.summarize_segment(segment, config.smooth_sigma)
        channels = unet.normalize_pair(pair.spatial, pair.temporal)
        maps[seg] = unet.tile_and_merge(weights, channels, seg, config.unet_stride)
        timer.add("segment", time.perf_counter() - t0)

    if config.streaming and do_motion and do_segment:
        ready: queue.Queue = queue.Queue(maxsize=MAX_SEGMENTS_IN_FLIGHT)

        def producer():
            for seg in range(n_segments):
                correct_segment(seg)
                ready.put(seg)
            ready.put(None)

        thread = threading.Thread(target=producer, daemon=True)
        thread.start()
        while True:
            seg = ready.get()
            if seg is None:
                break
            segment_one(seg)
        thread.join()
    else:
        if do_motion:
            for seg in range(n_segments):
                correct_segment(seg)
        if do_segment:
            for seg in range(n_segments):
                segment_one(seg)

    if do_motion:
        result.vectors = vectors
    if do_segment:
        result.probability_maps = maps
        t0 = time.perf_counter()
        result.footprints = fp.reconstruct_footprints(maps, config.footprint_config())
        timer.add("segment", time.perf_counter() - t0)
    return Video(corrected, frame_rate=video.frame_rate) if do_motion else video


def dump_config(config: PipelineConfig) -> str:
    lines = []
    for key, value in asdict(config).items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
