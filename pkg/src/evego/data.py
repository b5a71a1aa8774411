"""Dataset plumbing: on-disk scene layout, manifest save/load, lazy sample
iteration, and a synthetic egocentric scene generator.

A scene directory looks like::

    scene/
      events.txt        event stream for the whole scene
      frames/*.pgm      rendered intensity frames
      masks/*.pgm       ground-truth hand masks, one per event window
      manifest.jsonl    JSON header line + one JSON record per sample

Each record binds one event window (by index into the shared stream) to
its mask, per-side MANO ground truth, cached posed outputs, and camera
intrinsics. Paths are relative to the manifest's directory. Absent hands
are explicit nulls so loaders can flag single-hand samples.

The generator animates the procedural rig over a scrolling striped
background: the silhouette region renders at a constant intensity, so a
static hand over a static background emits no events, a moving hand emits
events along its swept boundary, and a moving background floods the frame
with events everywhere except the hand interior. That last configuration
reproduces the egocentric regime where background events vastly outnumber
hand events.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .dvs import DvsConfig, FrameSequence, simulate_events, save_frame_directory
from .errors import ConfigError, InvariantViolationError, MissingFileError, ParseError
from .events import (
    EventStream,
    EventWindow,
    SensorGeometry,
    WindowConfig,
    partition_windows,
    read_events_text,
    validate_stream,
    window_history,
    write_events_text,
)
from .hand_model import (
    CameraIntrinsics,
    HandOutput,
    HandRig,
    ManoParams,
    forward,
    make_synthetic_rig,
    mirror_rig,
    project_mask,
)
from .masks import HandMask, load_mask, save_mask

MANIFEST_VERSION = 1
SPLITS = ("train", "val", "test")

HAND_INTENSITY = 0.85
BACKGROUND_BASE = 0.5
BACKGROUND_AMPLITUDE = 0.2


@dataclass
class SampleRecord:
    sample_id: str
    event_file: str
    window_index: int
    gt_mask: str
    gt_params: Mapping[str, ManoParams]
    camera: CameraIntrinsics
    split: str = "train"
    gt_output: Mapping[str, HandOutput] | None = None
    oracle: dict | None = None  # generator-side event counts for audits

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ConfigError(f"unknown split {self.split!r}")
        if not self.gt_params:
            raise ConfigError(f"{self.sample_id}: record has no hands")


@dataclass
class DatasetManifest:
    geometry: SensorGeometry
    window: WindowConfig
    records: list[SampleRecord] = field(default_factory=list)
    split_policy: str = "by_scene"
    version: int = MANIFEST_VERSION
    base_dir: Path | None = None  # set on load; not serialized

    def __post_init__(self):
        ids = [r.sample_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise InvariantViolationError("sample ids must be unique")

    def split_counts(self) -> dict:
        counts = dict.fromkeys(SPLITS, 0)
        for record in self.records:
            counts[record.split] += 1
        return counts


# -- JSON codecs -------------------------------------------------------------


def params_to_json(params: ManoParams) -> dict:
    return {
        "theta": ad.value(params.theta).tolist(),
        "beta": ad.value(params.beta).tolist(),
        "trans": ad.value(params.trans).tolist(),
        "rot": ad.value(params.rot).tolist(),
        "side": params.side,
    }


def params_from_json(payload: dict) -> ManoParams:
    return ManoParams(
        theta=np.array(payload["theta"], dtype=np.float64),
        beta=np.array(payload["beta"], dtype=np.float64),
        trans=np.array(payload["trans"], dtype=np.float64),
        rot=np.array(payload["rot"], dtype=np.float64),
        side=payload["side"],
    )


def output_to_json(output: HandOutput) -> dict:
    return {
        "joints": ad.value(output.joints).tolist(),
        "vertices": ad.value(output.vertices).tolist(),
        "wrist": ad.value(output.wrist).tolist(),
    }


def output_from_json(payload: dict) -> HandOutput:
    return HandOutput(
        joints=np.array(payload["joints"], dtype=np.float64),
        vertices=np.array(payload["vertices"], dtype=np.float64),
        wrist=np.array(payload["wrist"], dtype=np.float64),
    )


def _record_to_json(record: SampleRecord) -> dict:
    sides = sorted(set(record.gt_params) | set(record.gt_output or ()))
    return {
        "sample_id": record.sample_id,
        "event_file": record.event_file,
        "window_index": record.window_index,
        "gt_mask": record.gt_mask,
        "split": record.split,
        "camera": {
            "fx": record.camera.fx, "fy": record.camera.fy,
            "cx": record.camera.cx, "cy": record.camera.cy,
        },
        "gt_params": {
            side: params_to_json(record.gt_params[side]) if side in record.gt_params else None
            for side in sides
        },
        "gt_output": None if record.gt_output is None else {
            side: output_to_json(record.gt_output[side]) for side in record.gt_output
        },
        "oracle": record.oracle,
    }


def _record_from_json(payload: dict) -> SampleRecord:
    gt_params = {
        side: params_from_json(blob)
        for side, blob in payload["gt_params"].items()
        if blob is not None
    }
    gt_output = payload.get("gt_output")
    if gt_output is not None:
        gt_output = {side: output_from_json(blob) for side, blob in gt_output.items()}
    camera = payload["camera"]
    return SampleRecord(
        sample_id=payload["sample_id"],
        event_file=payload["event_file"],
        window_index=payload["window_index"],
        gt_mask=payload["gt_mask"],
        gt_params=gt_params,
        camera=CameraIntrinsics(camera["fx"], camera["fy"], camera["cx"], camera["cy"]),
        split=payload["split"],
        gt_output=gt_output,
        oracle=payload.get("oracle"),
    )


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    header = {
        "version": manifest.version,
        "width": manifest.geometry.width,
        "height": manifest.geometry.height,
        "window_duration_us": manifest.window.window_duration,
        "history_length": manifest.window.history_length,
        "split_policy": manifest.split_policy,
        "split_counts": manifest.split_counts(),
    }
    with open(path, "w", encoding="ascii") as handle:
        json.dump(header, handle, sort_keys=True)
        handle.write("\n")
        for record in manifest.records:
            json.dump(_record_to_json(record), handle, sort_keys=True)
            handle.write("\n")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        with open(path, "r", encoding="ascii") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise MissingFileError("manifest", str(path)) from exc
    if not lines:
        raise ParseError(f"{path}: empty manifest")
    try:
        header = json.loads(lines[0])
        records = [_record_from_json(json.loads(line)) for line in lines[1:] if line.strip()]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"{path}: malformed manifest: {exc}") from exc
    if header.get("version") != MANIFEST_VERSION:
        raise ParseError(f"{path}: unsupported manifest version {header.get('version')}")
    return DatasetManifest(
        geometry=SensorGeometry(width=header["width"], height=header["height"]),
        window=WindowConfig(
            window_duration=header["window_duration_us"],
            history_length=header["history_length"],
        ),
        records=records,
        split_policy=header.get("split_policy", "by_scene"),
        base_dir=path.parent,
    )


@dataclass
class LoadedSample:
    """A fully materialized training/eval sample."""

    record: SampleRecord
    history: list[EventWindow]
    mask: HandMask
    gt_params: Mapping[str, ManoParams]
    gt_outputs: Mapping[str, HandOutput] | None


def iterate_samples(
    manifest: DatasetManifest, split: str | None = None, base_dir=None
) -> Iterator[LoadedSample]:
    """Yield samples in manifest order, loading each record's window
    history and mask. Event files are parsed once and cached."""
    root = Path(base_dir) if base_dir is not None else manifest.base_dir
    if root is None:
        raise ConfigError("manifest has no base directory; pass base_dir")
    window_cache: dict[str, list[EventWindow]] = {}
    for record in manifest.records:
        if split is not None and record.split != split:
            continue
        if record.event_file not in window_cache:
            event_path = root / record.event_file
            if not event_path.exists():
                raise MissingFileError(record.sample_id, str(event_path))
            stream = validate_stream(read_events_text(event_path))
            window_cache[record.event_file] = partition_windows(stream, manifest.window)
        windows = window_cache[record.event_file]
        history = window_history(windows, record.window_index, manifest.window.history_length)
        mask_path = root / record.gt_mask
        if not mask_path.exists():
            raise MissingFileError(record.sample_id, str(mask_path))
        mask = load_mask(mask_path, manifest.geometry, timestamp=history[-1].end_t)
        yield LoadedSample(
            record=record,
            history=history,
            mask=mask,
            gt_params=record.gt_params,
            gt_outputs=record.gt_output,
        )


# -- synthetic scenes --------------------------------------------------------


@dataclass(frozen=True)
class SceneConfig:
    """Hand trajectory and background motion for one generated scene.

    Speeds are pixels per frame; the hand follows a straight pixel-space
    drift at fixed depth with a small sinusoidal pose wiggle, and the
    background is a horizontally scrolling striped texture.
    """

    geometry: SensorGeometry = SensorGeometry(width=128, height=96)
    n_frames: int = 10
    frame_period: int = 33333
    seed: int = 0
    hands: tuple = ("right",)
    hand_start_px: tuple = (70.0, 30.0)
    hand_speed_px: tuple = (1.5, 0.6)
    hand_depth_m: float = 0.5
    pose_amplitude: float = 0.25
    background_speed_px: float = 2.0
    background_period_px: float = 9.0
    focal_px: float = 80.0
    contrast_threshold: float = 0.2
    split: str = "train"
    scene_name: str = "scene"

    def __post_init__(self):
        if self.n_frames < 2:
            raise ConfigError("a scene needs at least two frames")
        for side in self.hands:
            if side not in ("left", "right"):
                raise ConfigError(f"unknown hand side {side!r}")
        if self.split not in SPLITS:
            raise ConfigError(f"unknown split {self.split!r}")

    @property
    def camera(self) -> CameraIntrinsics:
        return CameraIntrinsics(
            fx=self.focal_px,
            fy=self.focal_px,
            cx=(self.geometry.width - 1) / 2.0,
            cy=(self.geometry.height - 1) / 2.0,
        )


def scene_rigs(seed: int = 0) -> dict:
    """The generator's rig pair: one procedural right hand and its mirror."""
    base = make_synthetic_rig(seed)
    return {"right": base, "left": mirror_rig(base)}


def _frame_params(config: SceneConfig, side: str, frame: int) -> ManoParams:
    camera = config.camera
    px = config.hand_start_px[0] + config.hand_speed_px[0] * frame
    py = config.hand_start_px[1] + config.hand_speed_px[1] * frame
    if side == "left":
        px = 2 * camera.cx - px  # mirrored trajectory on the other half
    z = config.hand_depth_m
    trans = np.array([(px - camera.cx) * z / camera.fx, (py - camera.cy) * z / camera.fy, z])
    phase = 2.0 * math.pi * frame / config.n_frames
    theta = config.pose_amplitude * np.sin(phase + np.arange(15) * 0.7)
    return ManoParams(
        theta=theta,
        beta=np.zeros(10),
        trans=trans,
        rot=np.zeros(3),
        side=side,
    )


def _background(config: SceneConfig, frame: int) -> np.ndarray:
    xs = np.arange(config.geometry.width, dtype=np.float64)
    phase = 2.0 * math.pi * (xs + config.background_speed_px * frame) / config.background_period_px
    row = BACKGROUND_BASE + BACKGROUND_AMPLITUDE * np.sin(phase)
    return np.tile(row, (config.geometry.height, 1))


def generate_synthetic_scene(out_dir, config: SceneConfig, rigs: Mapping[str, HandRig] | None = None) -> DatasetManifest:
    """Render frames, simulate events, and write a complete scene directory.

    Ground truth per window is the hand state at the window's closing
    frame. Each record also carries oracle counts produced by a direct
    per-event loop: the history's event total and how many of those fall
    on mask-1 pixels, for auditing the mask filter against an independent
    count.
    """
    out_dir = Path(out_dir)
    if rigs is None:
        rigs = scene_rigs(config.seed)
    camera = config.camera
    geometry = config.geometry

    frames = np.zeros((config.n_frames, geometry.height, geometry.width))
    frame_masks: list[HandMask] = []
    frame_params: list[dict] = []
    frame_outputs: list[dict] = []
    for i in range(config.n_frames):
        params = {side: _frame_params(config, side, i) for side in config.hands}
        outputs = {side: forward(rigs[side], params[side]) for side in config.hands}
        union = np.zeros((geometry.height, geometry.width), dtype=np.uint8)
        for side in config.hands:
            side_mask = project_mask(outputs[side], rigs[side].faces, camera, geometry)
            union |= side_mask.data
        frame = _background(config, i)
        frame[union == 1] = HAND_INTENSITY
        # store at 8-bit precision so re-simulating from the saved PGM
        # frames reproduces events.txt bit-exactly
        frames[i] = np.floor(np.clip(frame, 0.0, 1.0) * 255.0 + 0.5) / 255.0
        frame_masks.append(HandMask(union, timestamp=i * config.frame_period))
        frame_params.append(params)
        frame_outputs.append(outputs)

    sequence = FrameSequence(frames=frames, frame_period=config.frame_period)
    stream = simulate_events(
        sequence, DvsConfig(contrast_threshold=config.contrast_threshold, seed=config.seed)
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(exist_ok=True)
    save_frame_directory(sequence, out_dir / "frames")
    write_events_text(stream, out_dir / "events.txt")

    window_config = WindowConfig(
        window_duration=config.frame_period, history_length=3
    )
    records: list[SampleRecord] = []
    if len(stream) > 0:
        windows = partition_windows(validate_stream(stream), window_config)
        if windows[0].start_t != 0:
            raise InvariantViolationError(
                "scene windows must align with frame boundaries; "
                f"first window starts at {windows[0].start_t}"
            )
        for k, window in enumerate(windows):
            closing_frame = k + 1
            if closing_frame >= config.n_frames:
                break
            mask = HandMask(frame_masks[closing_frame].data, timestamp=window.end_t)
            mask_name = f"masks/mask_{k:04d}.pgm"
            save_mask(mask, out_dir / mask_name)
            history = window_history(windows, k, window_config.history_length)
            records.append(
                SampleRecord(
                    sample_id=f"{config.scene_name}_w{k:04d}",
                    event_file="events.txt",
                    window_index=k,
                    gt_mask=mask_name,
                    gt_params=frame_params[closing_frame],
                    camera=camera,
                    split=config.split,
                    gt_output=frame_outputs[closing_frame],
                    oracle=_history_oracle(history, mask),
                )
            )

    manifest = DatasetManifest(
        geometry=geometry,
        window=window_config,
        records=records,
        base_dir=out_dir,
    )
    save_manifest(manifest, out_dir / "manifest.jsonl")
    return manifest


def _history_oracle(history: Sequence[EventWindow], mask: HandMask) -> dict:
    """Plain per-event loop, deliberately independent of the vectorized
    filter, counting history events and how many sit on mask pixels."""
    total = 0
    in_mask = 0
    for window in history:
        for point in window.events.points():
            total += 1
            if mask.data[point.y, point.x] == 1:
                in_mask += 1
    return {"history_events": total, "history_in_mask": in_mask}


def make_training_samples(
    manifest: DatasetManifest,
    rigs: Mapping[str, HandRig],
    filtered: bool = True,
    budget: int = 2048,
    seed: int = 0,
    split: str | None = None,
    limit: int | None = None,
):
    """Materialize TrainingSamples from a manifest.

    ``filtered`` selects mask-filtered history clouds (ground-truth mask)
    over plain history clouds; both use the same budget and seed so runs
    differ only in the filtering. Missing cached outputs are recomputed by
    posing ``rigs``.
    """
    from .head import TrainingSample
    from .masks import filter_cloud
    from .representations import build_history_cloud

    samples = []
    for loaded in iterate_samples(manifest, split=split):
        if limit is not None and len(samples) >= limit:
            break
        geometry = manifest.geometry
        if filtered:
            cloud = filter_cloud(loaded.history, loaded.mask, geometry, budget=budget, seed=seed)
        else:
            cloud = build_history_cloud(loaded.history, geometry, budget=budget, seed=seed)
        outputs = loaded.gt_outputs
        if outputs is None:
            outputs = {
                side: forward(rigs[side], params) for side, params in loaded.gt_params.items()
            }
        samples.append(
            TrainingSample(cloud=cloud, gt_params=loaded.gt_params, gt_outputs=outputs)
        )
    return samples


def write_eval_samples(samples, path) -> None:
    """One JSON line per hand observation: joints (mm or meters, caller's
    choice), optional vertices, wrist, and an optional mask path."""
    from .metrics import EvalSample

    path = Path(path)
    with open(path, "w", encoding="ascii") as handle:
        for sample in samples:
            if not isinstance(sample, EvalSample):
                raise ConfigError(f"expected EvalSample, got {type(sample).__name__}")
            payload = {
                "joints": np.asarray(sample.joints).tolist(),
                "vertices": None if sample.vertices is None else np.asarray(sample.vertices).tolist(),
                "wrist": None if sample.wrist is None else np.asarray(sample.wrist).tolist(),
                "mask": None,
            }
            json.dump(payload, handle, sort_keys=True)
            handle.write("\n")


def read_eval_samples(path) -> list:
    from .metrics import EvalSample

    path = Path(path)
    if not path.exists():
        raise MissingFileError("eval samples", str(path))
    samples = []
    with open(path, "r", encoding="ascii") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
                mask = None
                if payload.get("mask") is not None:
                    mask = load_mask(path.parent / payload["mask"])
                samples.append(
                    EvalSample(
                        joints=np.array(payload["joints"], dtype=np.float64),
                        vertices=None
                        if payload.get("vertices") is None
                        else np.array(payload["vertices"], dtype=np.float64),
                        wrist=None
                        if payload.get("wrist") is None
                        else np.array(payload["wrist"], dtype=np.float64),
                        mask=mask,
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"{path}:{line_no}: malformed sample: {exc}") from exc
    return samples


def scene_stream(manifest: DatasetManifest) -> EventStream:
    """The scene's full validated event stream (single-event-file scenes)."""
    files = {record.event_file for record in manifest.records}
    if len(files) != 1:
        raise ConfigError(f"expected one event file, manifest has {sorted(files)}")
    return validate_stream(read_events_text(manifest.base_dir / files.pop()))
