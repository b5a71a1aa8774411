"""Top-level acceptance gate: nine numbered end-to-end properties.

Each test prints one [acceptance] line on success so a verbose run reads
as a scorecard. Tolerances are part of the contract; do not widen them.
"""

import json
import math
import time
from collections import Counter

import numpy as np

from conftest import make_window
from evego import autodiff as ad
from evego.data import iterate_samples, make_training_samples, scene_rigs
from evego.events import SensorGeometry
from evego.hand_model import (
    ManoParams,
    forward,
    mirror_params,
    mirror_rig,
    rodrigues,
    zero_params,
)
from evego.head import HeadConfig, HeadModel, forward_head, train_toy
from evego.losses import (
    HandLossWeights,
    HandOutput,
    HandState,
    bce_loss,
    interhand_loss,
    total_hand_loss,
)
from evego.masks import HandMask, filter_cloud
from evego.metrics import auc, mpjpe, mpvpe, pck_curve
from evego.representations import build_cloud, build_history_cloud, build_lnes, write_cloud
from golden_pipeline import GOLDEN_DIR, VERBATIM, artifact_digests, run_pipeline


def test_criterion_1_lnes_properties():
    rng = np.random.default_rng(11)
    geometry = SensorGeometry(width=64, height=48)
    start = time.perf_counter()
    for trial in range(1000):
        n = int(rng.integers(2, 120))
        start_t = int(rng.integers(0, 10_000))
        span = int(rng.integers(2, 5_000))
        ts = np.sort(rng.integers(start_t, start_t + span, size=n))
        ts[0], ts[-1] = start_t, start_t + span - 1
        # pixel (0, 0) is reserved for the earliest event so no later event
        # can overwrite its zero weight
        xs = rng.integers(1, geometry.width, size=n)
        ys = rng.integers(0, geometry.height, size=n)
        xs[0] = ys[0] = 0
        ps = rng.integers(0, 2, size=n) * 2 - 1
        rows = list(zip(xs.tolist(), ys.tolist(), ts.tolist(), ps.tolist()))

        window = make_window(rows, start_t, start_t + span, 64, 48)
        frame = build_lnes([window], geometry)[0]
        data = frame.data
        assert data.min() >= 0.0 and data.max() <= 1.0
        assert data[0, 0, 0 if ps[0] == 1 else 1] == 0.0
        assert data[ys[-1], xs[-1]].max() == 1.0
        assert data.max() == 1.0

        delta = 7919 + trial
        shifted_rows = [(x, y, t + delta, p) for x, y, t, p in rows]
        shifted = make_window(shifted_rows, start_t + delta, start_t + span + delta, 64, 48)
        assert np.array_equal(build_lnes([shifted], geometry)[0].data, data)
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    print(f"[acceptance] criterion 1: PASS 1000 windows, {elapsed:.2f}s")


def test_criterion_2_cloud_filter_soundness(tmp_path):
    rng = np.random.default_rng(13)
    geometry = SensorGeometry(width=32, height=24)
    start = time.perf_counter()
    for trial in range(1000):
        n = int(rng.integers(1, 300))
        span = int(rng.integers(50, 2000))
        ts = np.sort(rng.integers(0, span, size=n))
        xs = rng.integers(0, geometry.width, size=n)
        ys = rng.integers(0, geometry.height, size=n)
        ps = rng.integers(0, 2, size=n) * 2 - 1
        rows = list(zip(xs.tolist(), ys.tolist(), ts.tolist(), ps.tolist()))
        window = make_window(rows, 0, span, 32, 24)

        small_data = (rng.random((24, 32)) < 0.3).astype(np.uint8)
        big_data = small_data | (rng.random((24, 32)) < 0.3).astype(np.uint8)
        small = HandMask(small_data, timestamp=span)
        big = HandMask(big_data, timestamp=span)

        # budget above the event count: survivor sets are complete
        f_small = filter_cloud([window], small, geometry, budget=512, seed=trial)
        f_big = filter_cloud([window], big, geometry, budget=512, seed=trial)
        kept = f_small.points[: f_small.validity]
        if len(kept):
            px = np.rint(kept[:, 0] * (geometry.width - 1)).astype(int)
            py = np.rint(kept[:, 1] * (geometry.height - 1)).astype(int)
            assert np.all(small_data[py, px] == 1)
        small_rows = Counter(row.tobytes() for row in kept)
        big_rows = Counter(row.tobytes() for row in f_big.points[: f_big.validity])
        assert all(big_rows[key] >= count for key, count in small_rows.items())

        ones = HandMask(np.ones((24, 32), dtype=np.uint8), timestamp=span)
        f_all = filter_cloud([window], ones, geometry, budget=128, seed=trial)
        plain = build_history_cloud([window], geometry, budget=128, seed=trial)
        assert np.array_equal(f_all.points, plain.points)
        assert f_all.validity == plain.validity
        if trial % 100 == 0:
            write_cloud(f_all, tmp_path / "all.evcl")
            write_cloud(plain, tmp_path / "plain.evcl")
            assert (tmp_path / "all.evcl").read_bytes() == (tmp_path / "plain.evcl").read_bytes()
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    print(f"[acceptance] criterion 2: PASS 1000 pairs, {elapsed:.2f}s")


def test_criterion_3_event_reduction(egocentric_scene):
    _, manifest = egocentric_scene
    geometry = manifest.geometry
    frame_area = geometry.width * geometry.height
    total = in_mask = 0
    for loaded in iterate_samples(manifest):
        oracle = loaded.record.oracle
        assert loaded.mask.area() <= 0.02 * frame_area
        cloud = filter_cloud(
            loaded.history, loaded.mask, geometry, budget=oracle["history_events"], seed=0
        )
        assert cloud.validity == oracle["history_in_mask"]
        total += oracle["history_events"]
        in_mask += cloud.validity
    assert total > 0
    ratio = in_mask / total
    assert ratio <= 0.1
    print(f"[acceptance] criterion 3: PASS kept {in_mask}/{total} events ({ratio:.4f})")


def test_criterion_4_rig_properties(synthetic_rig):
    start = time.perf_counter()
    rig = synthetic_rig
    rest = forward(rig, zero_params())
    assert np.array_equal(rest.vertices, rig.template_vertices)

    offset = np.array([0.03, -0.02, 0.12])
    moved = forward(rig, ManoParams(np.zeros(15), np.zeros(10), offset, np.zeros(3)))
    assert np.max(np.abs(moved.vertices - (rest.vertices + offset))) <= 1e-12
    assert np.max(np.abs(moved.joints - (rest.joints + offset))) <= 1e-12

    # a global rigid motion must be reproduced exactly by the skinning,
    # which only happens when the weights sum to one per vertex
    rot = np.array([0.3, -0.5, 0.2])
    rigid = forward(rig, ManoParams(np.zeros(15), np.zeros(10), offset, rot))
    expected = (rest.vertices - rest.wrist) @ rodrigues(rot).T + rest.wrist + offset
    assert np.max(np.abs(rigid.vertices - expected)) <= 1e-9

    rng = np.random.default_rng(19)
    params = ManoParams(
        rng.normal(scale=0.4, size=15), rng.normal(scale=0.5, size=10),
        rng.normal(scale=0.05, size=3), rng.normal(scale=0.4, size=3), side="right",
    )
    right = forward(rig, params)
    left = forward(mirror_rig(rig), mirror_params(params))
    flip = np.array([-1.0, 1.0, 1.0])
    assert np.max(np.abs(left.vertices - right.vertices * flip)) <= 1e-9
    assert np.max(np.abs(left.joints - right.joints * flip)) <= 1e-9
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    print(f"[acceptance] criterion 4: PASS rest/translation/rigid/mirror, {elapsed:.3f}s")


def test_criterion_5_loss_suite():
    rng = np.random.default_rng(17)
    gt_mask = HandMask((rng.random((20, 24)) < 0.4).astype(np.uint8), timestamp=0)
    half = np.full((20, 24), 0.5)
    assert abs(bce_loss(half, gt_mask) - math.log(2.0)) <= 1e-9

    origin = np.zeros((1, 3))
    assert interhand_loss(origin, np.array([[3.0, 4.0, 0.0]]), origin, origin) == 5.0

    def random_state(side):
        return HandState(
            params=ManoParams(rng.normal(size=15), rng.normal(size=10),
                              rng.normal(size=3), rng.normal(size=3), side=side),
            output=HandOutput(joints=rng.normal(size=(20, 3)),
                              vertices=rng.normal(size=(16, 3)),
                              wrist=rng.normal(size=3)),
        )

    pred = {side: random_state(side) for side in ("left", "right")}
    gt = {side: random_state(side) for side in ("left", "right")}
    isolations = [
        ("L_joints", HandLossWeights(1.0, 0.0, 0.0, 0.0)),
        ("L_interhand", HandLossWeights(0.0, 1.0, 0.0, 0.0)),
        ("L_vertices", HandLossWeights(0.0, 0.0, 1.0, 0.0)),
        ("L_MANO", HandLossWeights(0.0, 0.0, 0.0, 1.0)),
    ]
    for key, weights in isolations:
        total, components = total_hand_loss(pred, gt, weights)
        assert total == components[key]

    total, components = total_hand_loss(pred, gt)
    manual = (
        0.1 * components["L_joints"]
        + 1.0 * components["L_interhand"]
        + 1.0 * components["L_vertices"]
        + 20.0 * components["L_MANO"]
    )
    assert abs(total - manual) <= 1e-12
    print("[acceptance] criterion 5: PASS bce/interhand/isolation/recombination")


def test_criterion_6_metric_suite():
    rng = np.random.default_rng(23)
    # integer-valued joints keep the translated sums exact, so the curve
    # must come out bit-identical
    pred = [rng.integers(-40, 40, size=(20, 3)).astype(float) for _ in range(10)]
    gt = [p + rng.integers(-5, 5, size=(20, 3)) for p in pred]
    pred_w = [p[0] for p in pred]
    gt_w = [g[0] for g in gt]
    base = auc(pck_curve(pred, gt, pred_wrists=pred_w, gt_wrists=gt_w))
    offsets = [rng.integers(-500, 500, size=3).astype(float) for _ in range(10)]
    shifted = auc(
        pck_curve(
            [p + o for p, o in zip(pred, offsets)],
            [g + o for g, o in zip(gt, offsets)],
            pred_wrists=[w + o for w, o in zip(pred_w, offsets)],
            gt_wrists=[w + o for w, o in zip(gt_w, offsets)],
        )
    )
    assert abs(base - shifted) <= 1e-12

    step_gt = [rng.integers(-40, 40, size=(20, 3)).astype(float) for _ in range(3)]
    step_pred = [g + np.array([50.0, 0.0, 0.0]) for g in step_gt]
    curve = pck_curve(step_pred, step_gt, root_relative=False)
    thresholds, fractions = curve.thresholds_mm, curve.fractions
    oracle = 0.0
    for i in range(len(thresholds) - 1):
        oracle += 0.5 * (fractions[i] + fractions[i + 1]) * (thresholds[i + 1] - thresholds[i])
    oracle /= thresholds[-1] - thresholds[0]
    assert auc(curve) == oracle
    assert auc(curve) == 0.505

    worst = 0.0
    for _ in range(100):
        counts = rng.integers(1, 9, size=int(rng.integers(1, 6)))
        pred_sets = [rng.normal(size=(c, 3)) * 40 for c in counts]
        gt_sets = [rng.normal(size=(c, 3)) * 40 for c in counts]
        distances = [
            math.dist(p, g)
            for ps, gs in zip(pred_sets, gt_sets)
            for p, g in zip(ps.tolist(), gs.tolist())
        ]
        pooled = sum(distances) / len(distances)
        worst = max(worst, abs(mpjpe(pred_sets, gt_sets) - pooled))
        worst = max(worst, abs(mpvpe(pred_sets, gt_sets) - pooled))
    assert worst <= 1e-9
    print(f"[acceptance] criterion 6: PASS auc exact, mpjpe/mpvpe worst {worst:.2e}")


def test_criterion_7_gradient_check(minimal_rig):
    start = time.perf_counter()
    config = HeadConfig(
        point_feature_dims=(5, 8, 16), global_dim=16, attn_dim=8,
        heads=1, branch_tokens=2, decoder_dims=(16, 31), seed=0,
    )
    rng = np.random.default_rng(29)
    ts = np.sort(rng.integers(0, 1000, size=24))
    rows = [
        (int(rng.integers(0, 16)), int(rng.integers(0, 12)), int(t),
         1 if rng.random() < 0.5 else -1)
        for t in ts
    ]
    window = make_window(rows, 0, 1000, width=16, height=12)
    cloud = build_cloud(window, window.events.geometry, budget=32, seed=0)

    rigs = {"left": mirror_rig(minimal_rig), "right": minimal_rig}
    gt_params = {
        side: ManoParams(
            rng.normal(scale=0.1, size=15), rng.normal(scale=0.1, size=10),
            rng.normal(scale=0.01, size=3), rng.normal(scale=0.1, size=3), side=side,
        )
        for side in ("left", "right")
    }
    gt_states = {
        side: HandState(params=gt_params[side], output=forward(rigs[side], gt_params[side]))
        for side in gt_params
    }
    weights = HandLossWeights()

    def pipeline_loss(parameters):
        model = HeadModel(config=config, parameters=parameters)
        left, right = forward_head(model, cloud)
        predicted = {"left": left, "right": right}
        pred_states = {
            side: HandState(
                params=predicted[side], output=forward(rigs[side], predicted[side])
            )
            for side in gt_params
        }
        total, _ = total_hand_loss(pred_states, gt_states, weights)
        return total

    model = HeadModel.initialize(config)
    pipeline_loss(model.parameters).backward()
    grads = {name: np.array(p.grad) for name, p in model.parameters.items()}
    plain = {name: np.array(ad.value(p)) for name, p in model.parameters.items()}
    names = sorted(plain)

    h = 1e-5
    worst = 0.0
    for _ in range(60):
        name = names[int(rng.integers(len(names)))]
        idx = int(rng.integers(plain[name].size))

        def probed(delta):
            bumped = dict(plain)
            bumped[name] = plain[name].copy()
            bumped[name].flat[idx] += delta
            return float(ad.value(pipeline_loss(bumped)))

        fd = (probed(h) - probed(-h)) / (2.0 * h)
        tape = grads[name].flat[idx]
        worst = max(worst, abs(tape - fd) / max(abs(fd), abs(tape), 1e-3))
    elapsed = time.perf_counter() - start
    assert worst < 1e-4
    assert elapsed < 60.0
    print(f"[acceptance] criterion 7: PASS 60 parameters, worst rel {worst:.2e}, {elapsed:.1f}s")


def test_criterion_8_toy_training(egocentric_scene):
    start = time.perf_counter()
    _, manifest = egocentric_scene
    rigs = scene_rigs(5)
    config = HeadConfig(
        point_feature_dims=(5, 16, 32), global_dim=32, attn_dim=8,
        branch_tokens=1, decoder_dims=(16, 31), seed=0,
    )
    finals = {}
    for filtered in (True, False):
        samples = make_training_samples(
            manifest, rigs, filtered=filtered, budget=2048, seed=0, limit=8
        )
        assert len(samples) == 8
        model = HeadModel.initialize(config)
        history = train_toy(model, samples, rigs, lr=1e-2, epochs=200)
        finals[filtered] = history[-1]["L_total"]
        if filtered:
            assert history[-1]["L_total"] < 0.5 * history[0]["L_total"]
    assert finals[True] <= finals[False]
    elapsed = time.perf_counter() - start
    assert elapsed < 600.0
    print(
        f"[acceptance] criterion 8: PASS filtered {finals[True]:.3f} <= "
        f"unfiltered {finals[False]:.3f}, {elapsed:.0f}s"
    )


def test_criterion_9_end_to_end_determinism(tmp_path):
    golden = json.loads((GOLDEN_DIR / "checksums.json").read_text())
    for threads in (1, 8):
        root = run_pipeline(tmp_path / f"threads_{threads}", threads=threads)
        assert artifact_digests(root) == golden
        for name in VERBATIM:
            assert (root / name).read_bytes() == (GOLDEN_DIR / name).read_bytes()
    print(f"[acceptance] criterion 9: PASS {len(golden)} artifacts at threads 1 and 8")
