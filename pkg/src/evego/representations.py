"""Event representations: LNES frames and fixed-budget event clouds.

LNES: a height x width x 2 surface where each cell of the polarity
channel stores the window-normalized timestamp of the newest event at
that pixel. An event at time t maps to (t - t_first) / (t_last - t_first)
using the first/last event timestamps of the window, so the earliest
event weighs exactly 0 and the latest exactly 1.

Event cloud: up to N five-feature points (x, y, t, p, n), coordinates
normalized to [0, 1], zero-padded to exactly N rows with a validity count
of the real points.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import GeometryMismatchError, ParseError
from .events import EventWindow, POSITIVE, SensorGeometry
from .pgm import write_pgm
from .validation import check_positive

CLOUD_MAGIC = b"EVCL"
DEFAULT_CLOUD_BUDGET = 2048


@dataclass(frozen=True)
class LnesFrame:
    """Two-channel temporal surface for one window (0 = positive events)."""

    data: np.ndarray  # (height, width, 2) float64 in [0, 1]
    window_start: int
    window_end: int

    @property
    def geometry(self) -> SensorGeometry:
        return SensorGeometry(width=self.data.shape[1], height=self.data.shape[0])


@dataclass(frozen=True)
class CloudPoint:
    x: float
    y: float
    t: float
    p: int
    n: int


class EventCloud:
    """Exactly ``budget`` rows of (x, y, t, p, n); the first ``validity``
    rows are real events in timestamp order, the rest are zero padding."""

    __slots__ = ("points", "validity")

    def __init__(self, points: np.ndarray, validity: int):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 5:
            raise ParseError(f"cloud points must be (N, 5), got {points.shape}")
        if not 0 <= validity <= points.shape[0]:
            raise ParseError(f"validity {validity} outside [0, {points.shape[0]}]")
        self.points = points
        self.validity = int(validity)

    @property
    def budget(self) -> int:
        return int(self.points.shape[0])

    def real_points(self) -> np.ndarray:
        return self.points[: self.validity]

    def point(self, i: int) -> CloudPoint:
        x, y, t, p, n = self.points[i]
        return CloudPoint(float(x), float(y), float(t), int(p), int(n))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, EventCloud)
            and self.validity == other.validity
            and np.array_equal(self.points, other.points)
        )


def build_lnes(windows: list[EventWindow], geometry: SensorGeometry) -> list[LnesFrame]:
    """Build one LNES frame per window.

    Collisions resolve to the newest event (ties by input order); an
    empty window yields an all-zero frame; a degenerate window whose
    events share one timestamp maps them all to weight 1.0.
    """
    frames = []
    for window in windows:
        data = np.zeros((geometry.height, geometry.width, 2), dtype=np.float64)
        ev = window.events
        if len(ev):
            if ev.x.max() >= geometry.width or ev.y.max() >= geometry.height:
                raise GeometryMismatchError("window events exceed the requested geometry")
            t_first = int(ev.t[0])
            t_last = int(ev.t[-1])
            if t_last > t_first:
                weights = (ev.t - t_first) / float(t_last - t_first)
            else:
                weights = np.ones(len(ev), dtype=np.float64)
            channel = np.where(ev.p == POSITIVE, 0, 1)
            flat = (ev.y.astype(np.int64) * geometry.width + ev.x) * 2 + channel
            # keep the last occurrence per cell explicitly, independent of
            # numpy's buffered-assignment behavior
            uniq, rev_first = np.unique(flat[::-1], return_index=True)
            keep = len(flat) - 1 - rev_first
            data.reshape(-1)[uniq] = weights[keep]
        frames.append(LnesFrame(data=data, window_start=window.start_t, window_end=window.end_t))
    return frames


def _assemble_cloud(
    x: np.ndarray,
    y: np.ndarray,
    t: np.ndarray,
    p: np.ndarray,
    span_start: int,
    span_end: int,
    geometry: SensorGeometry,
    budget: int,
    seed: int,
) -> EventCloud:
    """Normalize, subsample to the budget, and zero-pad. Shared by the
    single-window, history, and mask-filtered builders so that identical
    surviving events and seed give byte-identical clouds."""
    check_positive(budget, "budget")
    count = len(t)
    if count > budget:
        rng = np.random.default_rng(seed)
        idx = rng.choice(count, size=budget, replace=False)
        idx.sort()  # keep the sample in original timestamp order
        x, y, t, p = x[idx], y[idx], t[idx], p[idx]
        count = budget
    points = np.zeros((budget, 5), dtype=np.float64)
    if count:
        span = float(span_end - span_start)
        points[:count, 0] = x / float(max(geometry.width - 1, 1))
        points[:count, 1] = y / float(max(geometry.height - 1, 1))
        points[:count, 2] = (t - span_start) / span
        points[:count, 3] = (p == POSITIVE).astype(np.float64)
        points[:count, 4] = (p != POSITIVE).astype(np.float64)
    return EventCloud(points, validity=count)


def build_cloud(
    window: EventWindow,
    geometry: SensorGeometry,
    budget: int = DEFAULT_CLOUD_BUDGET,
    seed: int = 0,
) -> EventCloud:
    """Build a cloud from one window; timestamps normalize over the
    window's [start_t, end_t) span."""
    ev = window.events
    return _assemble_cloud(ev.x, ev.y, ev.t, ev.p, window.start_t, window.end_t, geometry, budget, seed)


def build_history_cloud(
    windows: list[EventWindow],
    geometry: SensorGeometry,
    budget: int = DEFAULT_CLOUD_BUDGET,
    seed: int = 0,
) -> EventCloud:
    """Concatenate a window history into a single cloud, normalizing
    timestamps over the first window's start to the last window's end."""
    if not windows:
        raise ParseError("need at least one window")
    x = np.concatenate([w.events.x for w in windows])
    y = np.concatenate([w.events.y for w in windows])
    t = np.concatenate([w.events.t for w in windows])
    p = np.concatenate([w.events.p for w in windows])
    return _assemble_cloud(x, y, t, p, windows[0].start_t, windows[-1].end_t, geometry, budget, seed)


def render_lnes_image(frame: LnesFrame, path, channel: int = 0) -> None:
    """Render one polarity channel to an 8-bit PGM (round half up)."""
    if channel not in (0, 1):
        raise ParseError(f"channel must be 0 or 1, got {channel}")
    img = np.floor(frame.data[:, :, channel] * 255.0 + 0.5).astype(np.uint8)
    write_pgm(path, img)


def write_cloud(cloud: EventCloud, path) -> None:
    """Write the EVCL container: magic, u32 budget, u32 validity,
    then budget x 5 little-endian float32 rows."""
    with open(path, "wb") as fh:
        fh.write(CLOUD_MAGIC)
        fh.write(struct.pack("<II", cloud.budget, cloud.validity))
        fh.write(cloud.points.astype("<f4").tobytes())


def read_cloud(path) -> EventCloud:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CLOUD_MAGIC:
        raise ParseError(f"{path}: missing EVCL magic")
    if len(data) < 12:
        raise ParseError(f"{path}: truncated header")
    budget, validity = struct.unpack("<II", data[4:12])
    expected = budget * 5 * 4
    if len(data) - 12 != expected:
        raise ParseError(f"{path}: expected {expected} payload bytes, got {len(data) - 12}")
    points = np.frombuffer(data[12:], dtype="<f4").reshape(budget, 5).astype(np.float64)
    if validity > budget:
        raise ParseError(f"{path}: validity {validity} exceeds budget {budget}")
    return EventCloud(points, validity=validity)
