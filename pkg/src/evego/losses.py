"""Training losses: pixelwise mask losses (BCE + Dice) and the hand losses
over joints, vertices, relative hand placement, and low-dimensional
parameters, with their weighted combinations.

The hand losses run on plain arrays and on tape tensors alike, so the same
functions serve evaluation scripts and the trainer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .errors import GeometryMismatchError, ShapeMismatchError, SideMismatchError
from .hand_model import HandOutput, ManoParams
from .masks import HandMask
from .validation import check_non_negative, check_probabilities

BCE_CLAMP = 1e-7
DICE_SMOOTHING = 1e-6

LOG_KEYS = ("L_joints", "L_interhand", "L_vertices", "L_MANO", "L_total")


@dataclass(frozen=True)
class MaskLossWeights:
    lambda_alpha: float = 0.7
    lambda_beta: float = 0.3

    def __post_init__(self):
        check_non_negative(self.lambda_alpha, "lambda_alpha")
        check_non_negative(self.lambda_beta, "lambda_beta")


@dataclass(frozen=True)
class HandLossWeights:
    lambda_gamma: float = 0.1    # joints
    lambda_delta: float = 1.0    # interhand
    lambda_epsilon: float = 1.0  # vertices
    lambda_zeta: float = 20.0    # mano params

    def __post_init__(self):
        for name in ("lambda_gamma", "lambda_delta", "lambda_epsilon", "lambda_zeta"):
            check_non_negative(getattr(self, name), name)


@dataclass(eq=False)
class PixelProbMap:
    """Per-pixel hand probabilities in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise GeometryMismatchError(f"probability map must be 2-D, got {self.values.shape}")
        check_probabilities(self.values, "values")


@dataclass
class HandState:
    """One hand's prediction or ground truth: parameters plus posed output."""

    params: ManoParams
    output: HandOutput


def _prob_values(pred) -> np.ndarray:
    if isinstance(pred, PixelProbMap):
        return pred.values
    values = np.asarray(pred, dtype=np.float64)
    check_probabilities(values, "pred")
    return values


def _check_same_geometry(pred: np.ndarray, gt: HandMask) -> None:
    if pred.shape != gt.data.shape:
        raise GeometryMismatchError(
            f"prediction is {pred.shape}, ground truth is {gt.data.shape}"
        )


def bce_loss(pred, gt: HandMask) -> float:
    """Mean binary cross-entropy with predictions clamped to
    [1e-7, 1 - 1e-7] so both log terms stay finite."""
    p = _prob_values(pred)
    _check_same_geometry(p, gt)
    p = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    y = gt.data.astype(np.float64)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def dice_loss(pred, gt: HandMask) -> float:
    """1 - Dice coefficient with additive smoothing; two empty masks give
    a ratio of exactly 1, hence loss 0."""
    p = _prob_values(pred)
    _check_same_geometry(p, gt)
    y = gt.data.astype(np.float64)
    overlap = float(np.sum(y * p))
    total = float(np.sum(y) + np.sum(p))
    return 1.0 - (2.0 * overlap + DICE_SMOOTHING) / (total + DICE_SMOOTHING)


def mask_loss(pred, gt: HandMask, weights: MaskLossWeights = MaskLossWeights()) -> float:
    return weights.lambda_alpha * bce_loss(pred, gt) + weights.lambda_beta * dice_loss(pred, gt)


def _points_l1(pred, gt):
    """Mean over points of the 1-norm of the 3-vector difference."""
    pred_shape = ad.value(pred).shape
    gt_shape = ad.value(gt).shape
    if pred_shape != gt_shape or len(pred_shape) != 2 or pred_shape[1] != 3:
        raise ShapeMismatchError(f"point sets must match as (N, 3): {pred_shape} vs {gt_shape}")
    return ad.mean(ad.sum_(ad.absolute(pred - gt), axis=1))


def joints_loss(pred_joints, gt_joints):
    return _points_l1(pred_joints, gt_joints)


def vertices_loss(pred_vertices, gt_vertices):
    return _points_l1(pred_vertices, gt_vertices)


def interhand_loss(pred_left, pred_right, gt_left, gt_right):
    """Mean over joints of the L2 error of the left-to-right relative
    vector. Invariant to any translation applied to both predicted hands."""
    shapes = {ad.value(a).shape for a in (pred_left, pred_right, gt_left, gt_right)}
    if len(shapes) != 1:
        raise ShapeMismatchError(f"joint sets must share one shape, got {sorted(shapes)}")
    diff = (pred_left - pred_right) - (gt_left - gt_right)
    return ad.mean(ad.sqrt(ad.sum_(diff * diff, axis=1)))


def mano_loss(pred: ManoParams, gt: ManoParams):
    """L2 norm of the pose-coefficient error plus L2 norm of the
    shape-coefficient error for one hand."""
    if pred.side != gt.side:
        raise SideMismatchError(f"cannot compare a {pred.side} hand against a {gt.side} hand")
    d_theta = pred.theta - gt.theta
    d_beta = pred.beta - gt.beta
    return ad.sqrt(ad.sum_(d_theta * d_theta)) + ad.sqrt(ad.sum_(d_beta * d_beta))


def total_hand_loss(
    pred: Mapping[str, HandState],
    gt: Mapping[str, HandState],
    weights: HandLossWeights = HandLossWeights(),
):
    """Weighted hand loss over the hands present in the ground truth.

    Per-hand terms (joints, vertices, parameters) are averaged over the
    present hands; the interhand term applies only when both hands are
    present and is zero otherwise. Returns the total and a component dict
    keyed like the training-log columns.
    """
    sides = sorted(gt)
    if not sides:
        raise SideMismatchError("ground truth contains no hands")
    if sorted(pred) != sides:
        raise SideMismatchError(f"prediction sides {sorted(pred)} != ground truth sides {sides}")

    def over_hands(term):
        acc = None
        for side in sides:
            part = term(pred[side], gt[side])
            acc = part if acc is None else acc + part
        return acc / float(len(sides))

    l_joints = over_hands(lambda p, g: joints_loss(p.output.joints, g.output.joints))
    l_vertices = over_hands(lambda p, g: vertices_loss(p.output.vertices, g.output.vertices))
    l_mano = over_hands(lambda p, g: mano_loss(p.params, g.params))
    if "left" in gt and "right" in gt:
        l_interhand = interhand_loss(
            pred["left"].output.joints,
            pred["right"].output.joints,
            gt["left"].output.joints,
            gt["right"].output.joints,
        )
    else:
        l_interhand = 0.0

    total = (
        weights.lambda_gamma * l_joints
        + weights.lambda_delta * l_interhand
        + weights.lambda_epsilon * l_vertices
        + weights.lambda_zeta * l_mano
    )
    components = {
        "L_joints": l_joints,
        "L_interhand": l_interhand,
        "L_vertices": l_vertices,
        "L_MANO": l_mano,
        "L_total": total,
    }
    return total, components
