"""Command-line interface for the voltage-imaging segmentation pipeline."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from voltseg import dataset, pipeline, simulate
from voltseg.evaluate import match_and_score, save_overlay_png, throughput_report
from voltseg.pipeline import ConfigError, PipelineConfig
from voltseg.unet import WeightFormatError, load_weights
from voltseg.video_io import VideoIOError, load_masks

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voltseg",
                                     description="Real-time neuron segmentation for voltage imaging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the full pipeline")
    p_run.add_argument("--config", help="flat key=value config file")
    _add_config_overrides(p_run)

    p_sim = sub.add_parser("simulate", help="render one synthetic labeled video")
    p_sim.add_argument("--out-dir", required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--frames", type=int, default=1000)
    p_sim.add_argument("--size", type=int, default=128)
    p_sim.add_argument("--neurons", type=int, nargs=2, default=(4, 8), metavar=("MIN", "MAX"))
    p_sim.add_argument("--noise", type=float, default=0.10)
    p_sim.add_argument("--motion", type=int, default=5)

    p_ds = sub.add_parser("make-dataset", help="generate a training patch dataset")
    p_ds.add_argument("--out-dir", required=True)
    p_ds.add_argument("--videos", type=int, default=1000)
    p_ds.add_argument("--patches-per-pair", type=int, default=10)
    p_ds.add_argument("--seed", type=int, default=0)
    p_ds.add_argument("--no-save-videos", action="store_true")

    p_seg = sub.add_parser("segment", help="motion-correct and segment a video")
    p_seg.add_argument("--config")
    _add_config_overrides(p_seg)

    p_tr = sub.add_parser("trace", help="full pipeline including trace extraction")
    p_tr.add_argument("--config")
    _add_config_overrides(p_tr)

    p_ev = sub.add_parser("evaluate", help="score predicted masks against ground truth")
    p_ev.add_argument("--pred", required=True, help="predicted mask TIFF")
    p_ev.add_argument("--gt", required=True, help="ground-truth mask TIFF")
    p_ev.add_argument("--iou-threshold", type=float, default=0.3)
    p_ev.add_argument("--report", help="write the JSON report here")
    p_ev.add_argument("--overlay", help="write a PNG overlay here")

    p_bn = sub.add_parser("bench", help="run the pipeline and report throughput")
    p_bn.add_argument("--config")
    _add_config_overrides(p_bn)
    p_bn.add_argument("--stage-seconds", nargs="+", type=float,
                      help="skip execution; report arithmetic for given stage times")
    p_bn.add_argument("--frames", type=int, help="frame count for --stage-seconds")
    p_bn.add_argument("--target-fps", type=float, help="target rate for --stage-seconds")

    p_fw = sub.add_parser("unet-forward",
                          help="forward pass on raw f32 patches (interop check)")
    p_fw.add_argument("--weights", required=True)
    p_fw.add_argument("--patches", required=True,
                      help="raw little-endian f32 file of (N, 2, 64, 64)")
    p_fw.add_argument("--out", required=True, help="raw f32 output (N, 64, 64)")
    return parser


def _add_config_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input")
    parser.add_argument("--output-dir")
    parser.add_argument("--weights")
    parser.add_argument("--stages")
    parser.add_argument("--threads", type=int)
    parser.add_argument("--search-radius", type=int)
    parser.add_argument("--no-subpixel", action="store_true")
    parser.add_argument("--no-streaming", action="store_true")
    parser.add_argument("--save-corrected", action="store_true")
    parser.add_argument("--save-probability-maps", action="store_true")


def _config_from_args(args) -> PipelineConfig:
    cfg = pipeline.load_config(args.config) if args.config else PipelineConfig()
    updates = {}
    mapping = {
        "input": "input_path",
        "output_dir": "output_dir",
        "weights": "weights_path",
        "stages": "stages",
        "threads": "threads",
        "search_radius": "search_radius",
    }
    for arg_name, field_name in mapping.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            updates[field_name] = value
    if getattr(args, "no_subpixel", False):
        updates["subpixel"] = False
    if getattr(args, "no_streaming", False):
        updates["streaming"] = False
    if getattr(args, "save_corrected", False):
        updates["save_corrected"] = True
    if getattr(args, "save_probability_maps", False):
        updates["save_probability_maps"] = True
    cfg = replace(cfg, **updates)
    if not cfg.input_path:
        raise ConfigError("no input video (use --input or the config file)")
    return cfg


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    if args.command == "segment":
        cfg = replace(cfg, stages="motion,segment")
    pipeline.run(cfg)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = simulate.SceneConfig(
        height=args.size, width=args.size, frames=args.frames,
        neuron_count=tuple(args.neurons), noise_level=args.noise,
        motion_amplitude=args.motion, seed=args.seed,
    )
    simulate.generate_video_dir(cfg, args.out_dir)
    return EXIT_OK


def cmd_make_dataset(args) -> int:
    scene = simulate.SceneConfig(seed=args.seed)
    manifest = dataset.generate_training_set(
        args.out_dir, args.videos, args.patches_per_pair, scene,
        save_videos=not args.no_save_videos,
    )
    print(f"wrote {manifest['patch_count']} patches to {args.out_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    preds = load_masks(args.pred)
    gts = load_masks(args.gt)
    report = match_and_score(preds, gts, args.iou_threshold)
    text = report.to_json()
    if args.report:
        Path(args.report).write_text(text)
    if args.overlay:
        save_overlay_png(preds, gts, args.overlay)
    print(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.stage_seconds:
        if not args.frames:
            raise ConfigError("--stage-seconds requires --frames")
        names = ["motion", "segment", "trace"]
        stage_seconds = {names[i] if i < 3 else f"stage{i}": s
                         for i, s in enumerate(args.stage_seconds)}
        report = throughput_report(args.frames, stage_seconds, args.target_fps)
    else:
        cfg = _config_from_args(args)
        result = pipeline.run(cfg)
        report = result.throughput
    print(report.to_json())
    return EXIT_OK


def cmd_unet_forward(args) -> int:
    from voltseg.unet import PATCH, forward_batch

    weights = load_weights(args.weights)
    raw = np.fromfile(args.patches, dtype="<f4")
    n = raw.size // (2 * PATCH * PATCH)
    if n * 2 * PATCH * PATCH != raw.size:
        raise VideoIOError(f"{args.patches}: size is not a multiple of 2x{PATCH}x{PATCH} floats")
    probs = forward_batch(weights, raw.reshape(n, 2, PATCH, PATCH))
    probs.astype("<f4").tofile(args.out)
    return EXIT_OK


_HANDLERS = {
    "run": cmd_run,
    "segment": cmd_run,
    "trace": cmd_run,
    "simulate": cmd_simulate,
    "make-dataset": cmd_make_dataset,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
    "unet-forward": cmd_unet_forward,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (VideoIOError, WeightFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
