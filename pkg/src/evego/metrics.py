"""Evaluation metrics for 3D hand reconstruction: MPJPE/MPVPE, the PCK
curve with its AUC (wrist-relative by default, giving R-AUC), mask IoU
averaging, and dataset-level report aggregation with JSON/CSV emitters.

Distance metrics preserve the unit of their inputs; the dataset evaluator
applies one explicit scale factor to report millimeters.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    InvariantViolationError,
    MissingWristError,
    SampleCountMismatchError,
    ShapeMismatchError,
)
from .masks import HandMask, iou

DEFAULT_MAX_THRESHOLD_MM = 100.0
DEFAULT_THRESHOLD_STEP_MM = 1.0


@dataclass(eq=False)
class PckCurve:
    """Fraction of keypoints within each distance threshold."""

    thresholds_mm: np.ndarray
    fractions: np.ndarray

    def __post_init__(self):
        self.thresholds_mm = np.asarray(self.thresholds_mm, dtype=np.float64)
        self.fractions = np.asarray(self.fractions, dtype=np.float64)
        if self.thresholds_mm.shape != self.fractions.shape or self.thresholds_mm.ndim != 1:
            raise ShapeMismatchError("thresholds and fractions must be matching 1-D arrays")
        if len(self.thresholds_mm) < 2:
            raise InvariantViolationError("a curve needs at least two thresholds")
        if np.any(np.diff(self.thresholds_mm) <= 0):
            raise InvariantViolationError("thresholds must be strictly increasing")
        if np.any(self.fractions < 0) or np.any(self.fractions > 1):
            raise InvariantViolationError("fractions must lie in [0, 1]")
        if np.any(np.diff(self.fractions) < 0):
            raise InvariantViolationError("fractions must be non-decreasing")


@dataclass(frozen=True)
class MetricReport:
    r_auc: float
    mpjpe_mm: float
    mpvpe_mm: float
    iou: float | None
    sample_count: int


def _stack_points(point_sets: Sequence[np.ndarray], name: str) -> np.ndarray:
    arrays = []
    for i, points in enumerate(point_sets):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ShapeMismatchError(f"{name}[{i}] must be (N, 3), got {points.shape}")
        arrays.append(points)
    if not arrays:
        raise ShapeMismatchError(f"{name} is empty")
    return np.concatenate(arrays, axis=0)


def _paired_distances(pred_sets, gt_sets, name: str) -> np.ndarray:
    if len(pred_sets) != len(gt_sets):
        raise SampleCountMismatchError(
            f"{len(pred_sets)} predicted {name} sets vs {len(gt_sets)} ground-truth sets"
        )
    for i, (p, g) in enumerate(zip(pred_sets, gt_sets)):
        if np.asarray(p).shape != np.asarray(g).shape:
            raise ShapeMismatchError(
                f"{name}[{i}]: prediction {np.asarray(p).shape} vs ground truth {np.asarray(g).shape}"
            )
    pred = _stack_points(pred_sets, f"pred {name}")
    gt = _stack_points(gt_sets, f"gt {name}")
    return np.sqrt(np.sum((pred - gt) ** 2, axis=1))


def mpjpe(pred_joint_sets, gt_joint_sets) -> float:
    """Mean Euclidean joint error over all joints of all samples, in the
    unit of the inputs. Accepts a single (N, 3) pair or sequences of them."""
    pred_sets, gt_sets = _as_set_lists(pred_joint_sets, gt_joint_sets)
    return float(np.mean(_paired_distances(pred_sets, gt_sets, "joints")))


def mpvpe(pred_vertex_sets, gt_vertex_sets) -> float:
    """As :func:`mpjpe`, over mesh vertices."""
    pred_sets, gt_sets = _as_set_lists(pred_vertex_sets, gt_vertex_sets)
    return float(np.mean(_paired_distances(pred_sets, gt_sets, "vertices")))


def _as_set_lists(pred, gt):
    if isinstance(pred, np.ndarray) and pred.ndim == 2:
        pred = [pred]
    if isinstance(gt, np.ndarray) and gt.ndim == 2:
        gt = [gt]
    return list(pred), list(gt)


def default_thresholds(
    max_mm: float = DEFAULT_MAX_THRESHOLD_MM, step_mm: float = DEFAULT_THRESHOLD_STEP_MM
) -> np.ndarray:
    count = int(round(max_mm / step_mm)) + 1
    return np.linspace(0.0, max_mm, count)


def pck_curve(
    pred_joint_sets,
    gt_joint_sets,
    root_relative: bool = True,
    pred_wrists: Sequence[np.ndarray] | None = None,
    gt_wrists: Sequence[np.ndarray] | None = None,
    thresholds_mm: np.ndarray | None = None,
) -> PckCurve:
    """Share of joints whose error is within each threshold.

    In root-relative mode each hand's wrist position is subtracted from its
    joints, prediction and ground truth alike, before distances; the wrists
    must then be supplied per sample. Inputs are in millimeters.
    """
    pred_sets, gt_sets = _as_set_lists(pred_joint_sets, gt_joint_sets)
    if root_relative:
        if pred_wrists is None or gt_wrists is None:
            raise MissingWristError("root-relative PCK needs wrist positions for both streams")
        if len(pred_wrists) != len(pred_sets) or len(gt_wrists) != len(gt_sets):
            raise MissingWristError(
                f"got {len(pred_wrists)}/{len(gt_wrists)} wrists "
                f"for {len(pred_sets)}/{len(gt_sets)} joint sets"
            )
        pred_sets = [np.asarray(j) - np.asarray(w).reshape(1, 3) for j, w in zip(pred_sets, pred_wrists)]
        gt_sets = [np.asarray(j) - np.asarray(w).reshape(1, 3) for j, w in zip(gt_sets, gt_wrists)]
    distances = _paired_distances(pred_sets, gt_sets, "joints")
    if thresholds_mm is None:
        thresholds_mm = default_thresholds()
    fractions = np.mean(distances[None, :] <= thresholds_mm[:, None], axis=1)
    return PckCurve(thresholds_mm=thresholds_mm, fractions=fractions)


def auc(curve: PckCurve) -> float:
    """Trapezoidal area under the curve, normalized by the threshold span."""
    span = curve.thresholds_mm[-1] - curve.thresholds_mm[0]
    return float(np.trapezoid(curve.fractions, curve.thresholds_mm) / span)


@dataclass
class EvalSample:
    """One hand observation to score; vertices, wrist, and mask are
    optional so partial evaluations stay possible."""

    joints: np.ndarray
    vertices: np.ndarray | None = None
    wrist: np.ndarray | None = None
    mask: HandMask | None = None

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        if self.vertices is not None:
            self.vertices = np.asarray(self.vertices, dtype=np.float64)
        if self.wrist is not None:
            self.wrist = np.asarray(self.wrist, dtype=np.float64).reshape(3)


def evaluate_dataset(
    pred_samples: Sequence[EvalSample],
    gt_samples: Sequence[EvalSample],
    unit_scale_mm: float = 1000.0,
    thresholds_mm: np.ndarray | None = None,
) -> tuple[MetricReport, PckCurve]:
    """Pool every aligned sample pair into one report.

    Joint and vertex errors are pooled across samples (so samples weigh by
    their point counts), the PCK curve is wrist-relative (R-AUC), and IoU
    averages over the samples that carry masks. ``unit_scale_mm`` converts
    the input unit to millimeters (1000 for meters).
    """
    if len(pred_samples) != len(gt_samples):
        raise SampleCountMismatchError(
            f"{len(pred_samples)} predictions vs {len(gt_samples)} ground truths"
        )
    if not pred_samples:
        raise SampleCountMismatchError("nothing to evaluate")

    pred_joints = [s.joints * unit_scale_mm for s in pred_samples]
    gt_joints = [s.joints * unit_scale_mm for s in gt_samples]
    mpjpe_mm = mpjpe(pred_joints, gt_joints)

    vertex_pairs = [
        (p.vertices * unit_scale_mm, g.vertices * unit_scale_mm)
        for p, g in zip(pred_samples, gt_samples)
        if p.vertices is not None and g.vertices is not None
    ]
    mpvpe_mm = (
        mpvpe([p for p, _ in vertex_pairs], [g for _, g in vertex_pairs])
        if vertex_pairs
        else 0.0
    )

    missing = [i for i, (p, g) in enumerate(zip(pred_samples, gt_samples))
               if p.wrist is None or g.wrist is None]
    if missing:
        raise MissingWristError(f"samples {missing} lack wrist positions")
    curve = pck_curve(
        pred_joints,
        gt_joints,
        root_relative=True,
        pred_wrists=[s.wrist * unit_scale_mm for s in pred_samples],
        gt_wrists=[s.wrist * unit_scale_mm for s in gt_samples],
        thresholds_mm=thresholds_mm,
    )
    r_auc = auc(curve)

    ious = [
        iou(p.mask, g.mask)
        for p, g in zip(pred_samples, gt_samples)
        if p.mask is not None and g.mask is not None
    ]
    report = MetricReport(
        r_auc=r_auc,
        mpjpe_mm=mpjpe_mm,
        mpvpe_mm=mpvpe_mm,
        iou=float(np.mean(ious)) if ious else None,
        sample_count=len(pred_samples),
    )
    return report, curve


def write_report_json(report: MetricReport, path) -> None:
    payload = {
        "r_auc": report.r_auc,
        "mpjpe_mm": report.mpjpe_mm,
        "mpvpe_mm": report.mpvpe_mm,
        "iou": report.iou,
        "sample_count": report.sample_count,
    }
    with open(path, "w", encoding="ascii") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_report_json(path) -> MetricReport:
    with open(path, "r", encoding="ascii") as handle:
        payload = json.load(handle)
    return MetricReport(
        r_auc=payload["r_auc"],
        mpjpe_mm=payload["mpjpe_mm"],
        mpvpe_mm=payload["mpvpe_mm"],
        iou=payload["iou"],
        sample_count=payload["sample_count"],
    )


def write_pck_csv(curve: PckCurve, path) -> None:
    with open(path, "w", encoding="ascii", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["threshold_mm", "fraction"])
        for threshold, fraction in zip(curve.thresholds_mm, curve.fractions):
            writer.writerow([f"{threshold:.6g}", f"{fraction:.17g}"])
