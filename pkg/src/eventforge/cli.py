"""Command-line interface: simulate, encode, decode, info, windows, filter,
calibrate, eval and bench.

Every run that produces files writes a JSON manifest next to its first
output; rerunning with an identical manifest reproduces the outputs byte for
byte. Exit codes: 0 success, 1 usage error, 2 data error. The
EVENTFORGE_THREADS environment variable caps worker threads where a
subcommand parallelizes.

Config files are JSON. Schema for ``simulate``:

    {
      "camera": {"width": 240, "height": 180, "threshold": 0.5,
                 "noise_rate_positive": 2500.0, "noise_rate_negative": 100.0,
                 "epsilon": 1.0, "steps_per_second": 1000},
      "scene": {"rerandomize_period": 50.0,
                "primitive": {"kind": "sphere", "radius_m": 0.12,
                              "albedo_a": [0.9, 0.7, 0.5],
                              "albedo_b": [0.3, 0.4, 0.8],
                              "checker_divisions": 6}}
    }

Both sections and every key are optional; anything not pinned by the config
(background, lights, trajectory, unset primitive fields) is drawn from the
run's seed. Pinned primitive fields shape the initial scene; re-randomization
then redraws scenes in full, which is its purpose.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .bench import run_benchmarks
from .calibration import CalibrationInput, estimate_threshold
from .events import SensorGeometry, US_PER_MS, US_PER_S, events_from_columns, slide_windows
from .filtering import Mode, PoseFilter, Scheduler, mode_for_residual, settings_for_mode
from .metrics import KEYPOINT_COUNT, auc, default_thresholds, pck2d_palm, pck3d
from .representations import (
    RepresentationKind,
    build,
    encode_window_image,
    window_image_to_png,
)
from .simulator import CameraConfig, sample_scene, simulate
from .stream_format import (
    DEFAULT_STEP_US,
    StreamFormatError,
    read_events,
    read_metadata,
    write_events,
    write_metadata,
)

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(USAGE_ERROR)


def worker_count() -> int:
    env = os.environ.get("EVENTFORGE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"EVENTFORGE_THREADS must be an integer, got {env!r}")
    return min(4, os.cpu_count() or 1)


def write_manifest(path: str, subcommand: str, seed, config_path, inputs, outputs,
                   extra=None) -> None:
    manifest = {
        "tool": "eventforge",
        "version": __version__,
        "subcommand": subcommand,
        "seed": seed,
        "config": config_path,
        "inputs": sorted(inputs),
        "outputs": sorted(outputs),
    }
    if extra:
        manifest.update(extra)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _camera_from_config(cfg: dict) -> CameraConfig:
    cam = cfg.get("camera", {})
    geometry = SensorGeometry(cam.get("width", 240), cam.get("height", 180))
    return CameraConfig(
        geometry=geometry,
        threshold=cam.get("threshold", 0.5),
        noise_rate_positive=cam.get("noise_rate_positive", 2500.0),
        noise_rate_negative=cam.get("noise_rate_negative", 100.0),
        epsilon=cam.get("epsilon", 1.0),
        steps_per_second=cam.get("steps_per_second", 1000),
    )


def cmd_simulate(args) -> int:
    from dataclasses import replace

    from .simulator import Primitive, SceneConfig

    cfg = _load_config(args.config)
    config = _camera_from_config(cfg)
    scene_cfg = cfg.get("scene", {})
    rng = np.random.default_rng(args.seed)
    scene = sample_scene(
        rng,
        config.geometry,
        trajectory_seconds=int(math.ceil(args.duration)) + 1,
        rerandomize_period=scene_cfg.get("rerandomize_period", 50.0),
    )
    prim_cfg = scene_cfg.get("primitive", {})
    if prim_cfg:
        allowed = {"kind", "radius_m", "albedo_a", "albedo_b", "checker_divisions"}
        unknown = sorted(set(prim_cfg) - allowed)
        if unknown:
            raise ValueError(f"unknown primitive config keys: {', '.join(unknown)}")
        overrides = {
            key: tuple(value) if key.startswith("albedo") else value
            for key, value in prim_cfg.items()
        }
        scene = SceneConfig(
            primitive=replace(scene.primitive, **overrides),
            background=scene.background,
            trajectory=scene.trajectory,
            lighting=scene.lighting,
            crop_offset=scene.crop_offset,
            rerandomize_period=scene.rerandomize_period,
        )
    result = simulate(scene, config, args.duration, rng)
    events_path = args.out + ".evs"
    meta_path = args.out + ".evm"
    step_us = US_PER_S // config.steps_per_second
    write_events(events_path, result.events, step_count=len(result.poses), step_us=step_us)
    write_metadata(meta_path, result.poses)
    write_manifest(
        args.out + ".manifest.json", "simulate", args.seed, args.config,
        [], [events_path, meta_path],
        extra={"duration": args.duration, "camera": cfg.get("camera", {}),
               "scene": scene_cfg},
    )
    print(f"{len(result.events)} events, {len(result.poses)} steps -> {events_path}")
    return 0


def _read_event_csv(path):
    ts, xs, ys, ps = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].strip().lower() == "t":
                continue
            t, x, y, p = (field.strip() for field in row[:4])
            ts.append(int(t))
            xs.append(int(x))
            ys.append(int(y))
            sign = int(p)
            if sign not in (1, -1):
                raise ValueError(f"polarity must be 1 or -1, got {sign}")
            ps.append(0 if sign == 1 else 1)
    return events_from_columns(
        np.asarray(ts, np.int64), np.asarray(xs, np.uint16),
        np.asarray(ys, np.uint16), np.asarray(ps, np.uint8),
    )


def cmd_encode(args) -> int:
    events = _read_event_csv(args.csv)
    quantized = write_events(args.out, events, step_count=args.steps)
    if quantized:
        print(f"warning: {quantized} timestamps were off the step grid and were quantized down",
              file=sys.stderr)
    write_manifest(args.out + ".manifest.json", "encode", None, None,
                   [args.csv], [args.out])
    print(f"{len(events)} events -> {args.out}")
    return 0


def cmd_decode(args) -> int:
    events, steps = read_events(args.events)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "p"])
        for e in events:
            writer.writerow([int(e["t"]), int(e["x"]), int(e["y"]), 1 - 2 * int(e["p"])])
    write_manifest(args.out + ".manifest.json", "decode", None, None,
                   [args.events], [args.out])
    print(f"{len(events)} events over {steps} steps -> {args.out}")
    return 0


def cmd_info(args) -> int:
    events, steps = read_events(args.events)
    positive = int(np.count_nonzero(events["p"] == 0))
    print(f"events: {len(events)} ({positive} positive, {len(events) - positive} negative)")
    print(f"steps: {steps}")
    if steps:
        counts = np.bincount((events["t"] // DEFAULT_STEP_US).astype(np.int64),
                             minlength=steps)
        print(f"events/step: min {counts.min()} mean {counts.mean():.1f} max {counts.max()}")
        hist, edges = np.histogram(counts, bins=8)
        for h, lo, hi in zip(hist, edges[:-1], edges[1:]):
            print(f"  [{lo:8.1f}, {hi:8.1f}): {h}")
    if args.metadata:
        poses, _ = read_metadata(args.metadata)
        print(f"metadata: N={poses.shape[1] if len(poses) else 0} fields, "
              f"{len(poses)} frames")
    return 0


def cmd_windows(args) -> int:
    kind = RepresentationKind(args.repr)
    events, steps = read_events(args.events)
    geometry = SensorGeometry(args.width, args.height)
    end = steps * DEFAULT_STEP_US
    length = args.length_ms * US_PER_MS
    stride = args.stride_ms * US_PER_MS
    os.makedirs(args.out_dir, exist_ok=True)

    def render(indexed):
        k, window = indexed
        image = build(kind, window, geometry)
        stem = os.path.join(args.out_dir, f"window_{k:06d}")
        with open(stem + ".evrw", "wb") as fh:
            fh.write(encode_window_image(image))
        outputs = [stem + ".evrw"]
        if args.png:
            window_image_to_png(image, stem + ".png")
            outputs.append(stem + ".png")
        return outputs

    windows = slide_windows(events, length, stride, end=end)
    indexed = enumerate(windows)
    if args.limit is not None:
        indexed = itertools.islice(indexed, args.limit)
    outputs = []
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        for produced in pool.map(render, indexed):
            outputs.extend(produced)
    write_manifest(
        os.path.join(args.out_dir, "windows.manifest.json"), "windows", None, None,
        [args.events], outputs,
        extra={"repr": args.repr, "length_ms": args.length_ms, "stride_ms": args.stride_ms},
    )
    print(f"{len(outputs)} files -> {args.out_dir}")
    return 0


def cmd_filter(args) -> int:
    poses, magic = read_metadata(args.input)
    if poses.shape[1] != 12:
        raise StreamFormatError(f"expected 12 pose fields, got {poses.shape[1]}")
    if args.mode == "auto":
        main = PoseFilter(settings_for_mode(Mode.SLOW))
        scheduler = Scheduler()
        filtered = []
        for obs in poses:
            scheduler.observe(obs)
            main.settings = settings_for_mode(mode_for_residual(scheduler.probe_residual))
            out, _ = main.step(obs)
            filtered.append(out)
        filtered = np.stack(filtered) if filtered else poses
    else:
        settings = settings_for_mode(Mode(args.mode))
        if args.sigma2 is not None:
            settings.process_sigma2 = args.sigma2
        if args.obs_noise is not None:
            settings.observation_noise = args.obs_noise
        main = PoseFilter(settings)
        filtered = np.stack([main.step(obs)[0] for obs in poses]) if len(poses) else poses
    write_metadata(args.out, filtered, magic=magic)
    write_manifest(args.out + ".manifest.json", "filter", None, None,
                   [args.input], [args.out],
                   extra={"mode": args.mode, "sigma2": args.sigma2,
                          "obs_noise": args.obs_noise})
    print(f"{len(filtered)} poses -> {args.out}")
    return 0


def cmd_calibrate(args) -> int:
    from PIL import Image

    frames = []
    timestamps = []
    with open(args.manifest) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            t_us, name = line.split(maxsplit=1)
            timestamps.append(int(t_us))
            with Image.open(os.path.join(args.frames_dir, name)) as im:
                frames.append(np.asarray(im.convert("L"), dtype=np.float64))
    events, _ = read_events(args.events)
    data = CalibrationInput(
        np.stack(frames), np.asarray(timestamps, np.int64), events, epsilon=args.epsilon
    )
    noise_rates = None
    if args.noise_pos is not None or args.noise_neg is not None:
        noise_rates = (args.noise_pos or 0.0, args.noise_neg or 0.0)
    est = estimate_threshold(data, noise_rates=noise_rates)
    print(f"threshold: {est.value:.6f} ({est.event_count} events, "
          f"total log change {est.total_log_change:.3f})")
    if est.corrected is not None:
        print(f"noise-corrected threshold: {est.corrected:.6f}")
    return 0


def _read_keypoint_csv(path, dims):
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].strip().lower() == "frame":
                continue
            frame = int(row[0])
            joint = int(row[1])
            coords = [float(v) for v in row[2 : 2 + dims]]
            if len(coords) != dims:
                raise ValueError(f"frame {frame} joint {joint}: expected {dims} coordinates")
            rows.setdefault(frame, {})[joint] = coords
    frames = sorted(rows)
    out = np.zeros((len(frames), KEYPOINT_COUNT, dims))
    for i, frame in enumerate(frames):
        joints = rows[frame]
        if sorted(joints) != list(range(KEYPOINT_COUNT)):
            raise ValueError(f"frame {frame} does not have exactly joints 0..{KEYPOINT_COUNT - 1}")
        for j in range(KEYPOINT_COUNT):
            out[i, j] = joints[j]
    return frames, out


def cmd_eval(args) -> int:
    dims = 3 if args.metric == "3d" else 2
    frames_p, pred = _read_keypoint_csv(args.pred, dims)
    frames_g, gt = _read_keypoint_csv(args.gt, dims)
    if frames_p != frames_g:
        raise ValueError(
            f"prediction and ground-truth frames differ: {len(frames_p)} vs {len(frames_g)}"
        )
    average = "per_frame" if args.per_frame else "pool"
    if args.metric == "3d":
        thresholds = default_thresholds(args.max_threshold or 100.0)
        curve = pck3d(pred, gt, thresholds=thresholds, average=average)
    else:
        thresholds = default_thresholds(args.max_threshold or 1.0)
        curve = pck2d_palm(pred, gt, thresholds=thresholds, average=average)
    area = auc(curve)
    with open(args.out_curve, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fraction"])
        for t, v in zip(curve.thresholds, curve.fractions):
            writer.writerow([f"{t:.6g}", f"{v:.6g}"])
    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot(curve.thresholds, curve.fractions)
        ax.set_xlabel("error threshold" + (" (mm)" if dims == 3 else " (palm fraction)"))
        ax.set_ylabel("fraction of correct keypoints")
        ax.set_ylim(0.0, 1.02)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)
        plt.close(fig)
    write_manifest(args.out_curve + ".manifest.json", "eval", None, None,
                   [args.pred, args.gt],
                   [args.out_curve] + ([args.plot] if args.plot else []),
                   extra={"metric": args.metric, "auc": area})
    print(f"AUC {area:.6f}")
    return 0


def cmd_bench(args) -> int:
    with tempfile.TemporaryDirectory() as workdir:
        report = run_benchmarks(
            workdir, seed=args.seed, loader_events=args.loader_events,
            sim_seconds=args.sim_seconds, lnes_windows=args.lnes_windows,
        )
    print("throughput report")
    for line in report.lines():
        print("  " + line)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="eventforge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a procedural scene into an event stream")
    p.add_argument("--duration", type=float, required=True, help="simulated seconds")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("encode", help="CSV events to binary stream")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, help="total step count (default: cover last event)")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="binary stream to CSV events")
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("info", help="inspect stream files")
    p.add_argument("--events", required=True)
    p.add_argument("--metadata")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("windows", help="build window representations")
    p.add_argument("--events", required=True)
    p.add_argument("--repr", choices=[k.value for k in RepresentationKind], default="lnes")
    p.add_argument("--length-ms", type=int, default=100, dest="length_ms")
    p.add_argument("--stride-ms", type=int, default=1, dest="stride_ms")
    p.add_argument("--width", type=int, default=240)
    p.add_argument("--height", type=int, default=180)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--png", action="store_true", help="also write PNG visualizations")
    p.add_argument("--limit", type=int, help="stop after this many windows")
    p.set_defaults(func=cmd_windows)

    p = sub.add_parser("filter", help="temporally filter a pose stream")
    p.add_argument("--in", required=True, dest="input")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["slow", "fast", "auto"], default="slow")
    p.add_argument("--sigma2", type=float, help="override the process variance")
    p.add_argument("--obs-noise", type=float, dest="obs_noise",
                   help="override the observation noise")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("calibrate", help="estimate the event threshold from frames + events")
    p.add_argument("--events", required=True)
    p.add_argument("--frames-dir", required=True, dest="frames_dir")
    p.add_argument("--manifest", required=True,
                   help="text file with one '<microseconds> <filename>' line per frame")
    p.add_argument("--epsilon", type=float, default=10.0)
    p.add_argument("--noise-pos", type=float, dest="noise_pos")
    p.add_argument("--noise-neg", type=float, dest="noise_neg")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("eval", help="PCK curve and AUC from keypoint CSVs")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--metric", choices=["3d", "2d-palm"], default="3d")
    p.add_argument("--out-curve", required=True, dest="out_curve")
    p.add_argument("--plot", help="optional PNG plot path")
    p.add_argument("--per-frame", action="store_true", dest="per_frame")
    p.add_argument("--max-threshold", type=float, dest="max_threshold")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="loader / simulator / builder throughput report")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loader-events", type=int, default=4_000_000, dest="loader_events")
    p.add_argument("--sim-seconds", type=float, default=1.0, dest="sim_seconds")
    p.add_argument("--lnes-windows", type=int, default=1500, dest="lnes_windows")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (StreamFormatError, ValueError, OverflowError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
