"""Command line front end.

One subcommand per pipeline stage: simulate, lnes, cloud, mask, filter,
forward, project, train-toy, evaluate, gen-scene. Every run prints its
fully resolved configuration (all defaults included) before doing work,
and exits 0 on success, 1 on usage errors, 2 on data errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .data import (
    SceneConfig,
    generate_synthetic_scene,
    load_manifest,
    make_training_samples,
    params_from_json,
    read_eval_samples,
    scene_rigs,
)
from .dvs import DvsConfig, load_frame_directory, simulate_events
from .errors import EvegoError
from .events import WindowConfig, partition_windows, read_events_text, validate_stream, window_history, write_events_text
from .hand_model import CameraIntrinsics, forward, load_rig, project_mask, save_obj
from .head import HeadConfig, HeadModel, save_checkpoint, train_toy
from .masks import load_mask, predict_mask_density, filter_cloud, save_mask
from .metrics import evaluate_dataset, write_pck_csv, write_report_json
from .representations import (
    DEFAULT_CLOUD_BUDGET,
    build_history_cloud,
    build_lnes,
    render_lnes_image,
    write_cloud,
)
from .validation import ordered_map

SCENE_PRESETS = {
    # hand and background both move: the egocentric regime, also the demo scene
    "egocentric": {},
    "moving-hand": {"background_speed_px": 0.0},
    "moving-background": {"hand_speed_px": (0.0, 0.0)},
    "static": {"hand_speed_px": (0.0, 0.0), "background_speed_px": 0.0},
    "two-hands": {"hands": ("left", "right")},
}


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this tool reserves 2 for data
    errors, so usage problems exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _print_banner(command: str, args: argparse.Namespace) -> None:
    config = {
        key: value if not isinstance(value, Path) else str(value)
        for key, value in sorted(vars(args).items())
        if key not in ("handler", "command")
    }
    print(f"[evego] {command} {json.dumps(config, sort_keys=True, default=str)}")


def _windows_from_events(path, window_us: int, history: int):
    stream = validate_stream(read_events_text(path))
    config = WindowConfig(window_duration=window_us, history_length=history)
    return stream.geometry, partition_windows(stream, config)


def _history(args):
    geometry, windows = _windows_from_events(args.events, args.window_us, args.history)
    return geometry, window_history(windows, args.window_index, args.history)


# -- handlers ----------------------------------------------------------------


def _cmd_simulate(args) -> int:
    sequence = load_frame_directory(args.frames)
    stream = simulate_events(
        sequence,
        DvsConfig(contrast_threshold=args.contrast_threshold, log_eps=args.log_eps, seed=args.seed),
    )
    write_events_text(stream, args.out)
    print(f"wrote {len(stream)} events to {args.out}")
    return 0


def _cmd_lnes(args) -> int:
    geometry, windows = _windows_from_events(args.events, args.window_us, 1)
    frames = build_lnes(windows, geometry)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def render(pair):
        index, frame = pair
        render_lnes_image(frame, out_dir / f"lnes_{index:04d}_pos.pgm", channel=0)
        render_lnes_image(frame, out_dir / f"lnes_{index:04d}_neg.pgm", channel=1)
        return index

    ordered_map(render, list(enumerate(frames)), threads=args.threads)
    print(f"rendered {len(frames)} windows to {out_dir}")
    return 0


def _cmd_cloud(args) -> int:
    geometry, history = _history(args)
    cloud = build_history_cloud(history, geometry, budget=args.budget, seed=args.seed)
    write_cloud(cloud, args.out)
    print(f"wrote cloud validity={cloud.validity} budget={cloud.budget} to {args.out}")
    return 0


def _cmd_mask(args) -> int:
    geometry, history = _history(args)
    frames = build_lnes(history, geometry)
    mask = predict_mask_density(
        frames,
        blur_radius=args.blur_radius,
        density_threshold=args.density_threshold,
        min_component_area=args.min_component_area,
        max_components=args.max_components,
    )
    save_mask(mask, args.out)
    print(f"wrote mask area={mask.area()} to {args.out}")
    return 0


def _cmd_filter(args) -> int:
    geometry, history = _history(args)
    mask = load_mask(args.mask, geometry, timestamp=history[-1].end_t)
    cloud = filter_cloud(history, mask, geometry, budget=args.budget, seed=args.seed)
    write_cloud(cloud, args.out)
    print(f"wrote filtered cloud validity={cloud.validity} budget={cloud.budget} to {args.out}")
    return 0


def _cmd_forward(args) -> int:
    rig = load_rig(args.rig)
    with open(args.params, "r", encoding="ascii") as handle:
        params = params_from_json(json.load(handle))
    output = forward(rig, params)
    if args.out_obj:
        save_obj(args.out_obj, output.vertices, rig.faces)
    if args.out_joints:
        payload = {
            "joints": np.asarray(output.joints).tolist(),
            "wrist": np.asarray(output.wrist).tolist(),
            "side": params.side,
        }
        with open(args.out_joints, "w", encoding="ascii") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True)
            handle.write("\n")
    print(f"posed {rig.n_vertices} vertices / {len(np.asarray(output.joints))} joints")
    return 0


def _cmd_project(args) -> int:
    rig = load_rig(args.rig)
    with open(args.params, "r", encoding="ascii") as handle:
        params = params_from_json(json.load(handle))
    output = forward(rig, params)
    from .events import SensorGeometry

    geometry = SensorGeometry(width=args.width, height=args.height)
    camera = CameraIntrinsics(fx=args.fx, fy=args.fy, cx=args.cx, cy=args.cy)
    mask = project_mask(output, rig.faces, camera, geometry)
    save_mask(mask, args.out)
    print(f"projected mask area={mask.area()} to {args.out}")
    return 0


def _cmd_train_toy(args) -> int:
    manifest = load_manifest(Path(args.scene) / "manifest.jsonl")
    rigs = scene_rigs(args.rig_seed)
    samples = make_training_samples(
        manifest,
        rigs,
        filtered=args.filtered,
        budget=args.budget,
        seed=args.cloud_seed,
        split=args.split,
        limit=args.max_samples,
    )
    config = HeadConfig(seed=args.head_seed, attention_mode=args.attention)
    model = HeadModel.initialize(config)
    history = train_toy(
        model, samples, rigs, lr=args.lr, epochs=args.epochs, log_path=args.out_log
    )
    if args.out_checkpoint:
        save_checkpoint(model, args.out_checkpoint)
    if history:
        print(
            f"trained {len(samples)} samples for {args.epochs} epochs: "
            f"L_total {history[0]['L_total']:.6g} -> {history[-1]['L_total']:.6g}"
        )
    else:
        print("no epochs requested; model left at initialization")
    return 0


def _cmd_evaluate(args) -> int:
    pred = read_eval_samples(args.pred)
    gt = read_eval_samples(args.gt)
    report, curve = evaluate_dataset(pred, gt, unit_scale_mm=args.unit_scale_mm)
    write_report_json(report, args.out_report)
    if args.out_pck:
        write_pck_csv(curve, args.out_pck)
    print(
        f"r_auc={report.r_auc:.6g} mpjpe_mm={report.mpjpe_mm:.6g} "
        f"mpvpe_mm={report.mpvpe_mm:.6g} samples={report.sample_count}"
    )
    return 0


def _cmd_gen_scene(args) -> int:
    overrides = dict(SCENE_PRESETS[args.preset])
    config = SceneConfig(
        n_frames=args.n_frames,
        seed=args.seed,
        split=args.split,
        scene_name=args.name,
        **overrides,
    )
    manifest = generate_synthetic_scene(args.out, config)
    print(f"generated scene with {len(manifest.records)} samples in {args.out}")
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="evego", description=__doc__)
    parser.add_argument(
        "--threads",
        type=int,
        default=os.cpu_count() or 1,
        help="cap on internal parallelism (default: available cores)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="render frame directory into an event stream")
    sim.add_argument("--frames", required=True, help="directory of PGM frames with manifest.txt")
    sim.add_argument("--out", required=True, help="output events text file")
    sim.add_argument("--contrast-threshold", type=float, default=0.2, help="log-intensity step per event")
    sim.add_argument("--log-eps", type=float, default=1e-3, help="epsilon inside log(I + eps)")
    sim.add_argument("--seed", type=int, default=0, help="reserved for noise models; unused by the deterministic simulator")
    sim.set_defaults(handler=_cmd_simulate)

    def add_window_flags(p, history_default=3):
        p.add_argument("--events", required=True, help="events text file")
        p.add_argument("--window-us", type=int, default=33333, help="window duration, microseconds")
        p.add_argument("--window-index", type=int, default=0, help="target window index")
        p.add_argument("--history", type=int, default=history_default, help="windows per history, oldest first")

    lnes = sub.add_parser("lnes", help="render per-window LNES frames as PGM pairs")
    lnes.add_argument("--events", required=True, help="events text file")
    lnes.add_argument("--window-us", type=int, default=33333, help="window duration, microseconds")
    lnes.add_argument("--out-dir", required=True, help="output directory for PGM renders")
    lnes.set_defaults(handler=_cmd_lnes)

    cloud = sub.add_parser("cloud", help="encode a window history as a fixed-budget event cloud")
    add_window_flags(cloud)
    cloud.add_argument("--budget", type=int, default=DEFAULT_CLOUD_BUDGET, help="cloud point budget")
    cloud.add_argument("--seed", type=int, default=0, help="subsampling seed")
    cloud.add_argument("--out", required=True, help="output EVCL file")
    cloud.set_defaults(handler=_cmd_cloud)

    mask = sub.add_parser("mask", help="predict a hand mask from LNES density")
    add_window_flags(mask)
    mask.add_argument("--blur-radius", type=int, default=3, help="box blur radius, pixels")
    mask.add_argument("--density-threshold", type=float, default=0.3, help="fraction of peak density")
    mask.add_argument("--min-component-area", type=int, default=50, help="smallest kept component, pixels")
    mask.add_argument("--max-components", type=int, default=2, help="largest components kept")
    mask.add_argument("--out", required=True, help="output mask PGM")
    mask.set_defaults(handler=_cmd_mask)

    filt = sub.add_parser("filter", help="mask-filter a window history into an event cloud")
    add_window_flags(filt)
    filt.add_argument("--mask", required=True, help="mask PGM (latest-window mask)")
    filt.add_argument("--budget", type=int, default=DEFAULT_CLOUD_BUDGET, help="cloud point budget")
    filt.add_argument("--seed", type=int, default=0, help="subsampling seed")
    filt.add_argument("--out", required=True, help="output EVCL file")
    filt.set_defaults(handler=_cmd_filter)

    fwd = sub.add_parser("forward", help="pose a rig from a params JSON")
    fwd.add_argument("--rig", required=True, help="rig container file")
    fwd.add_argument("--params", required=True, help="hand params JSON")
    fwd.add_argument("--out-obj", help="output OBJ mesh")
    fwd.add_argument("--out-joints", help="output joints JSON")
    fwd.set_defaults(handler=_cmd_forward)

    proj = sub.add_parser("project", help="rasterize a posed mesh into a mask PGM")
    proj.add_argument("--rig", required=True, help="rig container file")
    proj.add_argument("--params", required=True, help="hand params JSON")
    proj.add_argument("--fx", type=float, required=True, help="focal length x, pixels")
    proj.add_argument("--fy", type=float, required=True, help="focal length y, pixels")
    proj.add_argument("--cx", type=float, required=True, help="principal point x, pixels")
    proj.add_argument("--cy", type=float, required=True, help="principal point y, pixels")
    proj.add_argument("--width", type=int, required=True, help="sensor width, pixels")
    proj.add_argument("--height", type=int, required=True, help="sensor height, pixels")
    proj.add_argument("--out", required=True, help="output mask PGM")
    proj.set_defaults(handler=_cmd_project)

    train = sub.add_parser("train-toy", help="overfit the reconstruction head on a scene")
    train.add_argument("--scene", required=True, help="scene directory with manifest.jsonl")
    train.add_argument("--split", default=None, help="restrict to one split")
    train.add_argument("--filtered", action=argparse.BooleanOptionalAction, default=True,
                       help="mask-filter the input clouds (default on)")
    train.add_argument("--budget", type=int, default=DEFAULT_CLOUD_BUDGET, help="cloud point budget")
    train.add_argument("--cloud-seed", type=int, default=0, help="cloud subsampling seed")
    train.add_argument("--head-seed", type=int, default=0, help="model initialization seed")
    train.add_argument("--rig-seed", type=int, default=0, help="procedural rig seed")
    train.add_argument("--attention", choices=("cross", "self"), default="cross",
                       help="branch coupling mode")
    train.add_argument("--lr", type=float, default=1e-2, help="Adam learning rate")
    train.add_argument("--epochs", type=int, default=200, help="training epochs")
    train.add_argument("--max-samples", type=int, default=None, help="cap on training samples")
    train.add_argument("--out-log", default=None, help="training log CSV")
    train.add_argument("--out-checkpoint", default=None, help="model checkpoint file")
    train.set_defaults(handler=_cmd_train_toy)

    ev = sub.add_parser("evaluate", help="score predictions against ground truth")
    ev.add_argument("--pred", required=True, help="predictions JSONL")
    ev.add_argument("--gt", required=True, help="ground-truth JSONL")
    ev.add_argument("--unit-scale-mm", type=float, default=1000.0,
                    help="input unit to millimeters (1000 for meters)")
    ev.add_argument("--out-report", required=True, help="metric report JSON")
    ev.add_argument("--out-pck", default=None, help="PCK curve CSV")
    ev.set_defaults(handler=_cmd_evaluate)

    gen = sub.add_parser("gen-scene", help="generate a synthetic scene directory")
    gen.add_argument("--out", required=True, help="scene output directory")
    gen.add_argument("--preset", choices=sorted(SCENE_PRESETS), default="egocentric",
                     help="motion configuration")
    gen.add_argument("--n-frames", type=int, default=10, help="frame count")
    gen.add_argument("--seed", type=int, default=0, help="scene and rig seed")
    gen.add_argument("--split", default="train", help="split tag for all records")
    gen.add_argument("--name", default="scene", help="sample id prefix")
    gen.set_defaults(handler=_cmd_gen_scene)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _print_banner(args.command, args)
    try:
        return args.handler(args)
    except EvegoError as exc:
        print(f"evego {args.command}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"evego {args.command}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
