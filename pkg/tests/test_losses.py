"""Mask losses, per-hand geometric losses, and the weighted total."""

import math

import numpy as np
import pytest

import evego.autodiff as ad
from evego.errors import (
    ConfigError,
    GeometryMismatchError,
    ShapeMismatchError,
    SideMismatchError,
)
from evego.hand_model import HandOutput, ManoParams, zero_params
from evego.losses import (
    HandLossWeights,
    HandState,
    LOG_KEYS,
    MaskLossWeights,
    PixelProbMap,
    bce_loss,
    dice_loss,
    interhand_loss,
    joints_loss,
    mano_loss,
    mask_loss,
    total_hand_loss,
    vertices_loss,
)
from evego.masks import HandMask


def _random_mask(rng, shape=(12, 16)):
    return HandMask((rng.random(shape) < 0.3).astype(np.uint8))


def _output(joints, vertices=None, wrist=None):
    joints = np.asarray(joints, dtype=np.float64)
    if vertices is None:
        vertices = joints[:4] * 2.0
    if wrist is None:
        wrist = np.zeros(3)
    return HandOutput(joints=joints, vertices=np.asarray(vertices, float), wrist=wrist)


def _random_state(rng, side="right"):
    params = ManoParams(
        theta=rng.normal(size=15),
        beta=rng.normal(size=10),
        trans=rng.normal(size=3),
        rot=rng.normal(size=3),
        side=side,
    )
    return HandState(params=params, output=_output(rng.normal(size=(20, 3))))


class TestBceLoss:
    def test_confident_correct_prediction_is_tiny(self):
        rng = np.random.default_rng(0)
        gt = _random_mask(rng)
        assert bce_loss(gt.data.astype(np.float64), gt) <= 1e-6

    def test_uniform_half_gives_log_two(self):
        gt = _random_mask(np.random.default_rng(1))
        loss = bce_loss(np.full(gt.data.shape, 0.5), gt)
        assert loss == pytest.approx(math.log(2.0), abs=1e-12)

    def test_confident_wrong_prediction_hits_the_clamp(self):
        rng = np.random.default_rng(2)
        gt = _random_mask(rng)
        flipped = 1.0 - gt.data.astype(np.float64)
        assert bce_loss(flipped, gt) == pytest.approx(-math.log(1e-7), abs=1e-9)

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(3)
        gt = _random_mask(rng)
        pred = rng.uniform(0.05, 0.95, size=gt.data.shape)
        total = 0.0
        for y in range(gt.data.shape[0]):
            for x in range(gt.data.shape[1]):
                p = pred[y, x]
                total -= gt.data[y, x] * math.log(p) + (1 - gt.data[y, x]) * math.log(1 - p)
        want = total / gt.data.size
        assert bce_loss(pred, gt) == pytest.approx(want, abs=1e-12)

    def test_prob_map_wrapper_equals_raw_array(self):
        rng = np.random.default_rng(4)
        gt = _random_mask(rng)
        pred = rng.random(gt.data.shape)
        assert bce_loss(PixelProbMap(pred), gt) == bce_loss(pred, gt)

    def test_input_validation(self):
        gt = HandMask(np.zeros((4, 4)))
        with pytest.raises(GeometryMismatchError):
            bce_loss(np.zeros((4, 5)), gt)
        with pytest.raises(ConfigError):
            bce_loss(np.full((4, 4), 1.5), gt)
        with pytest.raises(GeometryMismatchError):
            PixelProbMap(np.zeros(4))
        with pytest.raises(ConfigError):
            PixelProbMap(np.full((2, 2), -0.1))


class TestDiceLoss:
    def test_perfect_overlap_is_exactly_zero(self):
        gt = _random_mask(np.random.default_rng(5))
        assert dice_loss(gt.data.astype(np.float64), gt) == 0.0

    def test_disjoint_masks_approach_one(self):
        a = np.zeros((6, 6))
        a[:3] = 1.0
        b = np.zeros((6, 6))
        b[3:] = 1.0
        assert dice_loss(a, HandMask(b)) > 0.99

    def test_two_empty_masks_cost_nothing(self):
        assert dice_loss(np.zeros((5, 5)), HandMask(np.zeros((5, 5)))) == 0.0

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(6)
        gt = _random_mask(rng)
        pred = rng.random(gt.data.shape)
        overlap = float((gt.data * pred).sum())
        total = float(gt.data.sum() + pred.sum())
        want = 1.0 - (2.0 * overlap + 1e-6) / (total + 1e-6)
        assert dice_loss(pred, gt) == pytest.approx(want, abs=1e-15)
        assert 0.0 <= dice_loss(pred, gt) <= 1.0


class TestMaskLoss:
    def test_default_combination(self):
        rng = np.random.default_rng(7)
        gt = _random_mask(rng)
        pred = rng.random(gt.data.shape)
        want = 0.7 * bce_loss(pred, gt) + 0.3 * dice_loss(pred, gt)
        assert mask_loss(pred, gt) == want

    def test_extreme_weights_select_one_term(self):
        rng = np.random.default_rng(8)
        gt = _random_mask(rng)
        pred = rng.random(gt.data.shape)
        assert mask_loss(pred, gt, MaskLossWeights(1.0, 0.0)) == bce_loss(pred, gt)
        assert mask_loss(pred, gt, MaskLossWeights(0.0, 1.0)) == dice_loss(pred, gt)

    def test_negative_weights_rejected(self):
        with pytest.raises(ConfigError):
            MaskLossWeights(lambda_alpha=-0.1)


class TestPointLosses:
    def test_identical_points_cost_nothing(self):
        pts = np.random.default_rng(9).normal(size=(20, 3))
        assert joints_loss(pts, pts.copy()) == 0.0
        assert vertices_loss(pts, pts.copy()) == 0.0

    def test_single_point_reference_value(self):
        pred = np.array([[1.0, 2.0, 3.0]])
        assert joints_loss(pred, np.zeros((1, 3))) == 6.0

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(10)
        pred = rng.normal(size=(20, 3))
        gt = rng.normal(size=(20, 3))
        want = sum(
            sum(abs(pred[i, k] - gt[i, k]) for k in range(3)) for i in range(20)
        ) / 20.0
        assert joints_loss(pred, gt) == pytest.approx(want, abs=1e-12)

    def test_shape_validation(self):
        with pytest.raises(ShapeMismatchError):
            joints_loss(np.zeros((20, 3)), np.zeros((19, 3)))
        with pytest.raises(ShapeMismatchError):
            joints_loss(np.zeros((20, 2)), np.zeros((20, 2)))
        with pytest.raises(ShapeMismatchError):
            vertices_loss(np.zeros(3), np.zeros(3))

    def test_gradient_is_scaled_sign(self):
        rng = np.random.default_rng(11)
        pred0 = rng.normal(size=(5, 3))
        gt = rng.normal(size=(5, 3))
        pred = ad.Tensor(pred0.copy(), requires_grad=True)
        joints_loss(pred, gt).backward()
        np.testing.assert_allclose(pred.grad, np.sign(pred0 - gt) / 5.0, atol=1e-15)


class TestInterhandLoss:
    def test_zero_when_relative_placement_matches(self):
        rng = np.random.default_rng(12)
        left = rng.normal(size=(20, 3))
        right = rng.normal(size=(20, 3))
        assert interhand_loss(left, right, left.copy(), right.copy()) == 0.0

    def test_invariant_to_joint_translation_of_the_prediction(self):
        rng = np.random.default_rng(13)
        left = rng.normal(size=(20, 3))
        right = rng.normal(size=(20, 3))
        shift = np.array([0.5, -0.2, 0.9])
        base = interhand_loss(left, right, left, right)
        moved = interhand_loss(left + shift, right + shift, left, right)
        assert base == 0.0
        assert moved == pytest.approx(0.0, abs=1e-12)

    def test_single_joint_reference_value(self):
        zero = np.zeros((1, 3))
        gt_left = np.array([[3.0, 4.0, 0.0]])
        assert interhand_loss(zero, zero, gt_left, zero) == 5.0

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(14)
        pl, pr, gl, gr = (rng.normal(size=(20, 3)) for _ in range(4))
        want = np.mean(
            [np.linalg.norm((pl[i] - pr[i]) - (gl[i] - gr[i])) for i in range(20)]
        )
        assert interhand_loss(pl, pr, gl, gr) == pytest.approx(want, abs=1e-12)

    def test_shape_validation(self):
        with pytest.raises(ShapeMismatchError):
            interhand_loss(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((3, 3)))


class TestManoLoss:
    def test_identical_params_cost_nothing(self):
        assert mano_loss(zero_params(), zero_params()) == 0.0

    def test_single_coefficient_reference_value(self):
        pred = zero_params()
        gt = zero_params()
        pred.beta = pred.beta.copy()
        pred.beta[2] = 0.3
        assert mano_loss(pred, gt) == pytest.approx(0.3, abs=1e-15)

    def test_matches_norm_oracle(self):
        rng = np.random.default_rng(15)
        pred = ManoParams(rng.normal(size=15), rng.normal(size=10), np.zeros(3), np.zeros(3))
        gt = ManoParams(rng.normal(size=15), rng.normal(size=10), np.zeros(3), np.zeros(3))
        want = np.linalg.norm(pred.theta - gt.theta) + np.linalg.norm(pred.beta - gt.beta)
        assert mano_loss(pred, gt) == pytest.approx(want, abs=1e-12)

    def test_side_mismatch(self):
        with pytest.raises(SideMismatchError):
            mano_loss(zero_params("left"), zero_params("right"))


class TestTotalHandLoss:
    def test_perfect_two_hand_prediction(self):
        rng = np.random.default_rng(16)
        gt = {"left": _random_state(rng, "left"), "right": _random_state(rng, "right")}
        total, parts = total_hand_loss(gt, gt)
        assert total == 0.0
        assert set(parts) == set(LOG_KEYS)
        for key in LOG_KEYS:
            assert parts[key] == 0.0

    def test_components_recombine_into_the_total(self):
        rng = np.random.default_rng(17)
        pred = {"left": _random_state(rng, "left"), "right": _random_state(rng, "right")}
        gt = {"left": _random_state(rng, "left"), "right": _random_state(rng, "right")}
        weights = HandLossWeights()
        total, parts = total_hand_loss(pred, gt, weights)
        want = (
            0.1 * parts["L_joints"]
            + 1.0 * parts["L_interhand"]
            + 1.0 * parts["L_vertices"]
            + 20.0 * parts["L_MANO"]
        )
        assert total == pytest.approx(want, abs=1e-12)
        assert parts["L_total"] == total

    def test_unit_weights_isolate_each_component(self):
        rng = np.random.default_rng(18)
        pred = {"right": _random_state(rng)}
        gt = {"right": _random_state(rng)}
        for selector, key in [
            ((1, 0, 0, 0), "L_joints"),
            ((0, 1, 0, 0), "L_interhand"),
            ((0, 0, 1, 0), "L_vertices"),
            ((0, 0, 0, 1), "L_MANO"),
        ]:
            total, parts = total_hand_loss(pred, gt, HandLossWeights(*selector))
            assert total == parts[key]

    def test_per_hand_terms_average_over_sides(self):
        rng = np.random.default_rng(19)
        pred = {"left": _random_state(rng, "left"), "right": _random_state(rng, "right")}
        gt = {"left": _random_state(rng, "left"), "right": _random_state(rng, "right")}
        _, parts = total_hand_loss(pred, gt)
        want = 0.5 * (
            joints_loss(pred["left"].output.joints, gt["left"].output.joints)
            + joints_loss(pred["right"].output.joints, gt["right"].output.joints)
        )
        assert parts["L_joints"] == pytest.approx(want, abs=1e-12)

    def test_single_hand_has_no_interhand_term(self):
        rng = np.random.default_rng(20)
        pred = {"right": _random_state(rng)}
        gt = {"right": _random_state(rng)}
        _, parts = total_hand_loss(pred, gt)
        assert parts["L_interhand"] == 0.0

    def test_weight_scaling_is_linear(self):
        rng = np.random.default_rng(21)
        pred = {"right": _random_state(rng)}
        gt = {"right": _random_state(rng)}
        base, parts = total_hand_loss(pred, gt, HandLossWeights())
        doubled, _ = total_hand_loss(pred, gt, HandLossWeights(lambda_zeta=40.0))
        assert doubled - base == pytest.approx(20.0 * parts["L_MANO"], rel=1e-12)

    def test_total_is_non_negative(self):
        rng = np.random.default_rng(22)
        for _ in range(5):
            pred = {"right": _random_state(rng)}
            gt = {"right": _random_state(rng)}
            total, _ = total_hand_loss(pred, gt)
            assert total >= 0.0

    def test_side_bookkeeping(self):
        rng = np.random.default_rng(23)
        with pytest.raises(SideMismatchError):
            total_hand_loss({"right": _random_state(rng)}, {})
        with pytest.raises(SideMismatchError):
            total_hand_loss(
                {"right": _random_state(rng)},
                {"left": _random_state(rng, "left"), "right": _random_state(rng)},
            )

    def test_negative_hand_weights_rejected(self):
        with pytest.raises(ConfigError):
            HandLossWeights(lambda_zeta=-1.0)
