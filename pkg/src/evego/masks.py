"""Hand-region masks: a density-heuristic predictor, PGM persistence,
mask-guided event-cloud filtering, and IoU.

The learned segmentation network is intentionally out of scope here; any
object with a ``predict(frames) -> HandMask`` method can stand in for it,
and masks can equally be loaded from files (ground truth or an external
model's output).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator

from .errors import GeometryMismatchError
from .events import EventWindow, SensorGeometry
from .pgm import read_pgm, write_pgm
from .representations import DEFAULT_CLOUD_BUDGET, EventCloud, LnesFrame, _assemble_cloud
from .validation import check_non_negative, check_positive


@dataclass(eq=False)
class HandMask:
    """Binary hand-region grid stamped with the window it belongs to."""

    data: np.ndarray  # (height, width) uint8 in {0, 1}
    timestamp: int = 0

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise GeometryMismatchError(f"mask must be 2-D, got shape {data.shape}")
        self.data = (data != 0).astype(np.uint8)

    @property
    def geometry(self) -> SensorGeometry:
        return SensorGeometry(width=self.data.shape[1], height=self.data.shape[0])

    def area(self) -> int:
        return int(self.data.sum())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, HandMask)
            and self.timestamp == other.timestamp
            and np.array_equal(self.data, other.data)
        )


@runtime_checkable
class MaskPredictor(Protocol):
    """Anything that turns a window history of LNES frames into one mask."""

    def predict(self, frames: Sequence[LnesFrame]) -> HandMask: ...


def predict_mask_density(
    frames: Sequence[LnesFrame],
    blur_radius: int = 3,
    density_threshold: float = 0.3,
    min_component_area: int = 50,
    max_components: int = 2,
) -> HandMask:
    """Heuristic mask from event density.

    Event presence is accumulated over all frames and both polarity
    channels, box-blurred with the given radius (mean over the in-bounds
    neighborhood), thresholded at ``density_threshold`` times the peak
    density, and reduced to the ``max_components`` largest 4-connected
    components of at least ``min_component_area`` pixels.
    """
    if not frames:
        raise GeometryMismatchError("need at least one frame")
    shape = frames[0].data.shape
    for f in frames:
        if f.data.shape != shape:
            raise GeometryMismatchError("frames differ in geometry")
    check_non_negative(blur_radius, "blur_radius")
    check_positive(max_components, "max_components")

    presence = np.zeros(shape[:2], dtype=np.int64)
    for f in frames:
        presence += (f.data[:, :, 0] > 0).astype(np.int64)
        presence += (f.data[:, :, 1] > 0).astype(np.int64)
    timestamp = frames[-1].window_end

    density = _box_mean(presence, blur_radius)
    peak = density.max()
    if peak <= 0.0:
        return HandMask(np.zeros(shape[:2], dtype=np.uint8), timestamp=timestamp)
    candidate = density >= density_threshold * peak

    labels, n_labels = ndimage.label(candidate)  # default structure = 4-connected
    if n_labels == 0:
        return HandMask(np.zeros(shape[:2], dtype=np.uint8), timestamp=timestamp)
    sizes = np.bincount(labels.reshape(-1))[1:]
    ranked = sorted(
        (label for label in range(1, n_labels + 1) if sizes[label - 1] >= min_component_area),
        key=lambda label: (-sizes[label - 1], label),
    )
    keep = ranked[:max_components]
    mask = np.isin(labels, keep).astype(np.uint8) if keep else np.zeros(shape[:2], dtype=np.uint8)
    return HandMask(mask, timestamp=timestamp)


def _box_mean(grid: np.ndarray, radius: int) -> np.ndarray:
    """Mean over the (2r+1)^2 neighborhood clipped at the borders.

    Exact integer window sums via an integral image; only the final
    division is floating point.
    """
    if radius == 0:
        return grid.astype(np.float64)
    h, w = grid.shape
    integral = np.zeros((h + 1, w + 1), dtype=np.int64)
    integral[1:, 1:] = np.cumsum(np.cumsum(grid, axis=0), axis=1)
    ys = np.arange(h)
    xs = np.arange(w)
    y0 = np.clip(ys - radius, 0, h)[:, None]
    y1 = np.clip(ys + radius + 1, 0, h)[:, None]
    x0 = np.clip(xs - radius, 0, w)[None, :]
    x1 = np.clip(xs + radius + 1, 0, w)[None, :]
    sums = integral[y1, x1] - integral[y0, x1] - integral[y1, x0] + integral[y0, x0]
    areas = (y1 - y0) * (x1 - x0)
    return sums / areas


def save_mask(mask: HandMask, path) -> None:
    """Write as P5 with {0, 255} values."""
    write_pgm(path, mask.data * np.uint8(255))


def load_mask(path, geometry: SensorGeometry | None = None, timestamp: int = 0) -> HandMask:
    """Read a P5 file; any nonzero byte counts as hand."""
    grid = read_pgm(path)
    if geometry is not None and grid.shape != (geometry.height, geometry.width):
        raise GeometryMismatchError(
            f"{path}: mask is {grid.shape[1]}x{grid.shape[0]}, "
            f"expected {geometry.width}x{geometry.height}"
        )
    return HandMask((grid != 0).astype(np.uint8), timestamp=timestamp)


def filter_cloud(
    windows: list[EventWindow],
    mask: HandMask,
    geometry: SensorGeometry,
    budget: int = DEFAULT_CLOUD_BUDGET,
    seed: int = 0,
) -> EventCloud:
    """Drop events outside the mask, then build one cloud of the survivors.

    All windows of the history are concatenated and filtered by the single
    (latest-timestamp) mask; surviving timestamps normalize over the full
    multi-window span. Filtering happens on the original integer pixel
    coordinates, before any normalization, so membership is exact.
    """
    if mask.geometry != geometry:
        raise GeometryMismatchError(
            f"mask geometry {mask.geometry} does not match sensor geometry {geometry}"
        )
    if not windows:
        raise GeometryMismatchError("need at least one window")
    x = np.concatenate([w.events.x for w in windows])
    y = np.concatenate([w.events.y for w in windows])
    t = np.concatenate([w.events.t for w in windows])
    p = np.concatenate([w.events.p for w in windows])
    keep = mask.data[y, x] == 1 if len(t) else np.zeros(0, dtype=bool)
    return _assemble_cloud(
        x[keep], y[keep], t[keep], p[keep],
        windows[0].start_t, windows[-1].end_t, geometry, budget, seed,
    )


def iou(pred: HandMask, gt: HandMask) -> float:
    """Intersection over union of two binary masks.

    Two empty masks agree perfectly, so that case is defined as 1.0.
    """
    if pred.data.shape != gt.data.shape:
        raise GeometryMismatchError(f"mask shapes differ: {pred.data.shape} vs {gt.data.shape}")
    inter = int(np.sum((pred.data == 1) & (gt.data == 1)))
    union = int(np.sum((pred.data == 1) | (gt.data == 1)))
    if union == 0:
        return 1.0
    return inter / union


class DensityMaskPredictor(BaseEstimator):
    """Estimator wrapper around :func:`predict_mask_density`.

    Stateless: fit is a no-op kept for pipeline compatibility.
    """

    def __init__(self, blur_radius=3, density_threshold=0.3, min_component_area=50, max_components=2):
        self.blur_radius = blur_radius
        self.density_threshold = density_threshold
        self.min_component_area = min_component_area
        self.max_components = max_components

    def fit(self, X=None, y=None):
        return self

    def predict(self, frames: Sequence[LnesFrame]) -> HandMask:
        return predict_mask_density(
            frames,
            blur_radius=self.blur_radius,
            density_threshold=self.density_threshold,
            min_component_area=self.min_component_area,
            max_components=self.max_components,
        )


class StaticMaskPredictor(BaseEstimator):
    """Serves a fixed mask (ground truth or an external model's output),
    restamped to the latest frame of each history it is asked about."""

    def __init__(self, mask: HandMask = None):
        self.mask = mask

    def fit(self, X=None, y=None):
        return self

    def predict(self, frames: Sequence[LnesFrame]) -> HandMask:
        if self.mask is None:
            raise GeometryMismatchError("StaticMaskPredictor has no mask set")
        return HandMask(self.mask.data.copy(), timestamp=frames[-1].window_end)
