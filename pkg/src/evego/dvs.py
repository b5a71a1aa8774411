"""Deterministic threshold DVS model: intensity frames in, event stream out.

Each pixel keeps a reference log intensity. Whenever the log intensity of
a new frame differs from the reference by at least the contrast threshold,
floor(|delta| / C) events of the matching sign are emitted and the
reference advances by the emitted multiple of C, carrying sub-threshold
residue to the next frame. No noise, leak, refractory, or bandwidth
effects are modeled, so identical inputs always produce identical streams.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GeometryMismatchError, ParseError
from .events import EventStream, SensorGeometry, validate_stream
from .pgm import read_pgm
from .validation import check_positive

FRAME_MANIFEST_NAME = "manifest.txt"


@dataclass(frozen=True)
class DvsConfig:
    """Simulator parameters.

    contrast_threshold: log-intensity step per event.
    log_eps: intensity floor added before the log, keeping log(0) finite.
    seed: reserved for stochastic variants; the default model ignores it.
    """

    contrast_threshold: float = 0.2
    log_eps: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        check_positive(self.contrast_threshold, "contrast_threshold")
        check_positive(self.log_eps, "log_eps")


class FrameSequence:
    """Grayscale frames (values in [0, 1]) sampled at a fixed period."""

    __slots__ = ("frames", "frame_period", "start_t")

    def __init__(self, frames, frame_period: int, start_t: int = 0):
        frames = [np.asarray(f, dtype=np.float64) for f in frames]
        if frames:
            shape = frames[0].shape
            for i, f in enumerate(frames):
                if f.ndim != 2:
                    raise GeometryMismatchError(f"frame {i} is not 2-D")
                if f.shape != shape:
                    raise GeometryMismatchError(f"frame {i} has shape {f.shape}, expected {shape}")
        self.frames = frames
        self.frame_period = check_positive(int(frame_period), "frame_period")
        self.start_t = int(start_t)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def geometry(self) -> SensorGeometry:
        if not self.frames:
            raise ConfigError("empty frame sequence has no geometry")
        h, w = self.frames[0].shape
        return SensorGeometry(width=w, height=h)


def simulate_events(frames: FrameSequence, config: DvsConfig = DvsConfig()) -> EventStream:
    """Run the threshold model over consecutive frame pairs.

    Event timestamps are spread evenly inside each inter-frame interval:
    the j-th of n events lands at t_k + floor(j * period / (n + 1)).
    Output ordering: sorted by t, ties broken by (y, x, polarity).
    """
    if len(frames) < 2:
        raise ConfigError("need at least 2 frames to simulate events")
    geometry = frames.geometry
    c = config.contrast_threshold
    log_ref = np.log(frames.frames[0] + config.log_eps)

    xs, ys, ts, ps = [], [], [], []
    for k in range(1, len(frames)):
        log_new = np.log(frames.frames[k] + config.log_eps)
        delta = log_new - log_ref
        n = np.floor(np.abs(delta) / c).astype(np.int64)
        sign = np.sign(delta).astype(np.int64)
        fired = n > 0
        if np.any(fired):
            rows, cols = np.nonzero(fired)
            counts = n[fired]
            total = int(counts.sum())
            x = np.repeat(cols, counts).astype(np.int64)
            y = np.repeat(rows, counts).astype(np.int64)
            pol = np.repeat(sign[fired], counts)
            # j = 1..n_pixel within each pixel's burst
            offsets = np.arange(total, dtype=np.int64) - np.repeat(
                np.concatenate(([0], np.cumsum(counts[:-1]))), counts
            ) + 1
            per_event = np.repeat(counts, counts)
            t0 = frames.start_t + (k - 1) * frames.frame_period
            t = t0 + (offsets * frames.frame_period) // (per_event + 1)
            xs.append(x)
            ys.append(y)
            ts.append(t)
            ps.append(pol)
        log_ref = log_ref + sign * n * c

    if not xs:
        return EventStream.empty(geometry)
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    t = np.concatenate(ts)
    p = np.concatenate(ps)
    order = np.lexsort((p, x, y, t))
    return validate_stream((x[order], y[order], t[order], p[order]), geometry)


def load_frame_directory(path) -> FrameSequence:
    """Load a directory of P5 frames plus a ``frame_period_us=N`` manifest.

    Frames are read in sorted filename order; 8-bit values map to [0, 1].
    """
    manifest = os.path.join(path, FRAME_MANIFEST_NAME)
    if not os.path.exists(manifest):
        raise ParseError(f"{path}: missing {FRAME_MANIFEST_NAME}")
    period = None
    with open(manifest, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("frame_period_us="):
                period = int(line.split("=", 1)[1])
    if period is None:
        raise ParseError(f"{manifest}: missing frame_period_us=N line")
    names = sorted(n for n in os.listdir(path) if n.endswith(".pgm"))
    if not names:
        raise ParseError(f"{path}: no .pgm frames found")
    frames = [read_pgm(os.path.join(path, n)).astype(np.float64) / 255.0 for n in names]
    return FrameSequence(frames, frame_period=period)


def save_frame_directory(frames: FrameSequence, path) -> None:
    from .pgm import write_pgm

    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, FRAME_MANIFEST_NAME), "w", encoding="ascii") as fh:
        fh.write(f"frame_period_us={frames.frame_period}\n")
    for i, frame in enumerate(frames.frames):
        quantized = np.floor(np.clip(frame, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
        write_pgm(os.path.join(path, f"frame_{i:05d}.pgm"), quantized)
