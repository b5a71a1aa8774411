"""Canonical event types, stream validation, and fixed-width time windowing.

Timestamps are integer microseconds throughout, so window arithmetic is
exact. Polarity is +1 (positive) or -1 (negative).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    IndexOutOfRangeError,
    NegativeTimestampError,
    OutOfBoundsError,
    ParseError,
)
from .validation import check_positive

POSITIVE = 1
NEGATIVE = -1

EVENT_TEXT_MAGIC = "# evego-events v1"
EVENT_BINARY_MAGIC = b"EVST"


@dataclass(frozen=True)
class SensorGeometry:
    """Sensor pixel grid; defaults to the 346 x 260 DVS layout."""

    width: int = 346
    height: int = 260

    def __post_init__(self):
        check_positive(self.width, "width")
        check_positive(self.height, "height")


@dataclass(frozen=True)
class EventPoint:
    """A single asynchronous brightness-change event."""

    x: int
    y: int
    t: int
    polarity: int

    def __post_init__(self):
        if self.polarity not in (POSITIVE, NEGATIVE):
            raise ParseError(f"polarity must be +1 or -1, got {self.polarity!r}")


@dataclass(frozen=True)
class WindowConfig:
    """Fixed-width windowing parameters.

    window_duration: window length in microseconds (33333 for 30 fps).
    history_length: number of consecutive windows fed to segmentation.
    """

    window_duration: int = 33333
    history_length: int = 3

    def __post_init__(self):
        check_positive(self.window_duration, "window_duration")
        check_positive(self.history_length, "history_length")


class EventStream:
    """Validated, time-sorted event arrays bound to a sensor geometry.

    Construct via :func:`validate_stream`; the constructor itself trusts
    its inputs and only normalizes dtypes.
    """

    __slots__ = ("x", "y", "t", "p", "geometry")

    def __init__(self, x, y, t, p, geometry: SensorGeometry):
        self.x = np.asarray(x, dtype=np.int32)
        self.y = np.asarray(y, dtype=np.int32)
        self.t = np.asarray(t, dtype=np.int64)
        self.p = np.asarray(p, dtype=np.int8)
        self.geometry = geometry

    def __len__(self) -> int:
        return int(self.t.shape[0])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, EventStream)
            and self.geometry == other.geometry
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.p, other.p)
        )

    def points(self) -> list[EventPoint]:
        """Materialize as EventPoint values (small streams, tests)."""
        return [
            EventPoint(int(x), int(y), int(t), int(p))
            for x, y, t, p in zip(self.x, self.y, self.t, self.p)
        ]

    def slice(self, lo: int, hi: int) -> "EventStream":
        return EventStream(self.x[lo:hi], self.y[lo:hi], self.t[lo:hi], self.p[lo:hi], self.geometry)

    @staticmethod
    def empty(geometry: SensorGeometry) -> "EventStream":
        return EventStream(
            np.empty(0, np.int32), np.empty(0, np.int32), np.empty(0, np.int64), np.empty(0, np.int8), geometry
        )


@dataclass(frozen=True)
class EventWindow:
    """Events inside [start_t, end_t), sorted by timestamp."""

    start_t: int
    end_t: int
    events: EventStream

    def __len__(self) -> int:
        return len(self.events)

    @property
    def duration(self) -> int:
        return self.end_t - self.start_t


def _as_arrays(events):
    """Accept EventStream, a list of EventPoint, or four parallel arrays."""
    if isinstance(events, EventStream):
        return events.x, events.y, events.t, events.p
    if isinstance(events, tuple) and len(events) == 4:
        x, y, t, p = events
        return (
            np.asarray(x, dtype=np.int64),
            np.asarray(y, dtype=np.int64),
            np.asarray(t, dtype=np.int64),
            np.asarray(p, dtype=np.int64),
        )
    pts = list(events)
    if not pts:
        z = np.empty(0, dtype=np.int64)
        return z, z, z, z
    x = np.array([e.x for e in pts], dtype=np.int64)
    y = np.array([e.y for e in pts], dtype=np.int64)
    t = np.array([e.t for e in pts], dtype=np.int64)
    p = np.array([e.polarity for e in pts], dtype=np.int64)
    return x, y, t, p


def validate_stream(events, geometry: SensorGeometry | None = None) -> EventStream:
    """Validate coordinates/timestamps and return a stably time-sorted stream.

    ``geometry`` defaults to the stream's own when an EventStream is
    passed. Raises OutOfBoundsError or NegativeTimestampError with the
    index of the first offending event in input order.
    """
    if geometry is None:
        if not isinstance(events, EventStream):
            raise ConfigError("geometry is required unless events is an EventStream")
        geometry = events.geometry
    x, y, t, p = _as_arrays(events)
    if len(t):
        bad_t = np.flatnonzero(t < 0)
        if bad_t.size:
            raise NegativeTimestampError(int(bad_t[0]))
        bad_xy = np.flatnonzero((x < 0) | (x >= geometry.width) | (y < 0) | (y >= geometry.height))
        if bad_xy.size:
            raise OutOfBoundsError(int(bad_xy[0]))
        bad_p = np.flatnonzero((p != POSITIVE) & (p != NEGATIVE))
        if bad_p.size:
            raise ParseError(f"event {int(bad_p[0])}: polarity must be +1 or -1")
    order = np.argsort(t, kind="stable")
    return EventStream(x[order], y[order], t[order], p[order], geometry)


def partition_windows(stream: EventStream, config: WindowConfig) -> list[EventWindow]:
    """Tile the stream into consecutive fixed-width windows.

    Windows are anchored at the first event's timestamp rounded down to a
    multiple of window_duration. Empty intermediate windows are emitted so
    window indices map to wall-clock time. An empty stream yields [].
    """
    if len(stream) == 0:
        return []
    d = config.window_duration
    anchor = (int(stream.t[0]) // d) * d
    n_windows = int((int(stream.t[-1]) - anchor) // d) + 1
    # Events are sorted, so each window is a contiguous slice.
    edges = anchor + d * np.arange(1, n_windows, dtype=np.int64)
    cuts = np.searchsorted(stream.t, edges, side="left")
    bounds = np.concatenate(([0], cuts, [len(stream)]))
    windows = []
    for i in range(n_windows):
        lo, hi = int(bounds[i]), int(bounds[i + 1])
        windows.append(
            EventWindow(start_t=anchor + i * d, end_t=anchor + (i + 1) * d, events=stream.slice(lo, hi))
        )
    return windows


def window_history(windows: list[EventWindow], index: int, history_length: int) -> list[EventWindow]:
    """Return the ``history_length`` windows ending at ``index`` inclusive.

    When fewer windows precede ``index``, the front is padded with empty
    windows of the correct time extents so the output length is constant.
    """
    if not 0 <= index < len(windows):
        raise IndexOutOfRangeError(f"window index {index} outside [0, {len(windows)})")
    check_positive(history_length, "history_length")
    geometry = windows[index].events.geometry
    duration = windows[index].duration
    out: list[EventWindow] = []
    for j in range(index - history_length + 1, index + 1):
        if j >= 0:
            out.append(windows[j])
        else:
            start = windows[0].start_t + j * duration
            out.append(EventWindow(start_t=start, end_t=start + duration, events=EventStream.empty(geometry)))
    return out


# --- event text format -------------------------------------------------------

def write_events_text(stream: EventStream, path, negative_as: int = -1) -> None:
    """Write the one-event-per-line text format.

    Header: ``# evego-events v1 width=W height=H``; lines are ``t,x,y,p``
    with positive polarity as 1 and negative as ``negative_as`` (-1 or 0).
    """
    if negative_as not in (-1, 0):
        raise ParseError("negative_as must be -1 or 0")
    lines = [f"{EVENT_TEXT_MAGIC} width={stream.geometry.width} height={stream.geometry.height}"]
    neg = str(negative_as)
    for x, y, t, p in zip(stream.x, stream.y, stream.t, stream.p):
        lines.append(f"{t},{x},{y},{1 if p == POSITIVE else neg}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def read_events_text(path) -> EventStream:
    """Parse the text format back into a validated stream."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith(EVENT_TEXT_MAGIC):
            raise ParseError(f"{path}: missing '{EVENT_TEXT_MAGIC}' header")
        fields = dict(item.split("=", 1) for item in header[len(EVENT_TEXT_MAGIC):].split())
        try:
            geometry = SensorGeometry(width=int(fields["width"]), height=int(fields["height"]))
        except (KeyError, ValueError) as exc:
            raise ParseError(f"{path}: bad geometry in header") from exc
        xs, ys, ts, ps = [], [], [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 't,x,y,p'")
            try:
                t, x, y, p = (int(v) for v in parts)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-integer field") from exc
            if p not in (1, 0, -1):
                raise ParseError(f"{path}:{lineno}: polarity must be 1, 0, or -1")
            ts.append(t)
            xs.append(x)
            ys.append(y)
            ps.append(POSITIVE if p == 1 else NEGATIVE)
    return validate_stream((np.array(xs), np.array(ys), np.array(ts), np.array(ps)), geometry)


# --- event binary container --------------------------------------------------

def write_events_binary(stream: EventStream, path) -> None:
    """Write the compact little-endian container (magic ``EVST``)."""
    import struct

    with open(path, "wb") as fh:
        fh.write(EVENT_BINARY_MAGIC)
        fh.write(struct.pack("<IIIQ", 1, stream.geometry.width, stream.geometry.height, len(stream)))
        rec = np.empty(len(stream), dtype=np.dtype([("t", "<i8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")]))
        rec["t"], rec["x"], rec["y"], rec["p"] = stream.t, stream.x, stream.y, stream.p
        fh.write(rec.tobytes())


def read_events_binary(path) -> EventStream:
    import struct

    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != EVENT_BINARY_MAGIC:
        raise ParseError(f"{path}: missing EVST magic")
    if len(data) < 24:
        raise ParseError(f"{path}: truncated header")
    version, width, height, count = struct.unpack("<IIIQ", data[4:24])
    if version != 1:
        raise ParseError(f"{path}: unsupported EVST version {version}")
    rec_dtype = np.dtype([("t", "<i8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])
    expected = count * rec_dtype.itemsize
    if len(data) - 24 != expected:
        raise ParseError(f"{path}: expected {expected} payload bytes, got {len(data) - 24}")
    rec = np.frombuffer(data[24:], dtype=rec_dtype)
    return validate_stream(
        (rec["x"].astype(np.int64), rec["y"].astype(np.int64), rec["t"].copy(), rec["p"].astype(np.int64)),
        SensorGeometry(width=width, height=height),
    )
