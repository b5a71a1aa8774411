"""Reconstruction head: config, init, forward invariances, toy training,
and checkpoints."""

import csv
import dataclasses
import struct

import numpy as np
import pytest

import evego.autodiff as ad
from evego.errors import ConfigError, NonFiniteError, ParseError
from evego.hand_model import ManoParams, forward
from evego.head import (
    HeadConfig,
    HeadModel,
    TrainingSample,
    _layer_shapes,
    forward_head,
    load_checkpoint,
    save_checkpoint,
    train_toy,
)
from evego.losses import LOG_KEYS
from evego.representations import EventCloud

SMALL = HeadConfig(
    point_feature_dims=(5, 8, 16),
    global_dim=16,
    attn_dim=8,
    heads=1,
    branch_tokens=2,
    decoder_dims=(16, 31),
    seed=0,
)


def _cloud(rng, n=20, budget=32):
    points = np.zeros((budget, 5))
    points[:n, :3] = rng.random((n, 3))
    points[:n, 3] = (rng.random(n) < 0.5).astype(float)
    points[:n, 4] = 1.0 - points[:n, 3]
    return EventCloud(points, validity=n)


def _sample(rig, rng):
    params = ManoParams(
        theta=rng.normal(scale=0.1, size=15),
        beta=rng.normal(scale=0.1, size=10),
        trans=rng.normal(scale=0.01, size=3),
        rot=rng.normal(scale=0.1, size=3),
        side="right",
    )
    return TrainingSample(
        cloud=_cloud(rng),
        gt_params={"right": params},
        gt_outputs={"right": forward(rig, params)},
    )


def _params_snapshot(model):
    return {name: p.data.copy() for name, p in model.parameters.items()}


class TestHeadConfig:
    def test_round_trips_through_dict(self):
        config = dataclasses.replace(SMALL, heads=2, attention_mode="self")
        assert HeadConfig.from_dict(config.to_dict()) == config

    def test_rejects_inconsistent_dimensions(self):
        with pytest.raises(ConfigError):
            dataclasses.replace(SMALL, point_feature_dims=(4, 8, 16))
        with pytest.raises(ConfigError):
            dataclasses.replace(SMALL, global_dim=32)
        with pytest.raises(ConfigError):
            dataclasses.replace(SMALL, decoder_dims=(16, 30))
        with pytest.raises(ConfigError):
            dataclasses.replace(SMALL, heads=3)  # 8 % 3 != 0
        with pytest.raises(ConfigError):
            dataclasses.replace(SMALL, heads=0)
        with pytest.raises(ConfigError):
            dataclasses.replace(SMALL, branch_tokens=0)
        with pytest.raises(ConfigError):
            dataclasses.replace(SMALL, attention_mode="both")


class TestInitialize:
    def test_is_seeded(self):
        a = HeadModel.initialize(SMALL)
        b = HeadModel.initialize(SMALL)
        c = HeadModel.initialize(dataclasses.replace(SMALL, seed=1))
        for name in a.parameters:
            np.testing.assert_array_equal(a.parameters[name].data, b.parameters[name].data)
        assert any(
            not np.array_equal(a.parameters[n].data, c.parameters[n].data)
            for n in a.parameters
        )

    def test_names_shapes_and_order(self):
        model = HeadModel.initialize(SMALL)
        shapes = _layer_shapes(SMALL)
        assert list(model.parameters) == [name for name, _ in shapes]
        for name, shape in shapes:
            assert model.parameters[name].shape == shape
            assert model.parameters[name].requires_grad
        assert model.parameter_count() == sum(
            int(np.prod(s)) for _, s in shapes
        )

    def test_weights_respect_the_fan_in_bound(self):
        model = HeadModel.initialize(HeadConfig())
        shapes = dict(_layer_shapes(HeadConfig()))
        for name, param in model.parameters.items():
            layer = name[:-2]
            bound = 1.0 / np.sqrt(shapes[layer + ".w"][0])
            assert np.abs(param.data).max() <= bound, name
            assert np.abs(param.data).max() > 0.0


class TestForwardHead:
    def test_output_layout(self):
        model = HeadModel.initialize(SMALL)
        left, right = forward_head(model, _cloud(np.random.default_rng(0)))
        assert (left.side, right.side) == ("left", "right")
        for params in (left, right):
            assert ad.value(params.theta).shape == (15,)
            assert ad.value(params.beta).shape == (10,)
            assert ad.value(params.trans).shape == (3,)
            assert ad.value(params.rot).shape == (3,)

    def test_point_order_does_not_matter(self):
        rng = np.random.default_rng(1)
        model = HeadModel.initialize(SMALL)
        cloud = _cloud(rng, n=20, budget=32)
        shuffled = cloud.points.copy()
        shuffled[:20] = shuffled[:20][rng.permutation(20)]
        base_left, _ = forward_head(model, cloud)
        perm_left, _ = forward_head(model, EventCloud(shuffled, validity=20))
        np.testing.assert_array_equal(ad.value(base_left.theta), ad.value(perm_left.theta))
        np.testing.assert_array_equal(ad.value(base_left.trans), ad.value(perm_left.trans))

    def test_padding_rows_are_ignored(self):
        rng = np.random.default_rng(2)
        model = HeadModel.initialize(SMALL)
        cloud = _cloud(rng, n=10, budget=16)
        junk = cloud.points.copy()
        junk[10:] = rng.normal(size=(6, 5))
        _, base_right = forward_head(model, cloud)
        _, junk_right = forward_head(model, EventCloud(junk, validity=10))
        np.testing.assert_array_equal(ad.value(base_right.theta), ad.value(junk_right.theta))

    def test_empty_cloud_decodes_a_defined_constant(self):
        model = HeadModel.initialize(SMALL)
        small_left, _ = forward_head(model, EventCloud(np.zeros((8, 5)), validity=0))
        big_left, _ = forward_head(model, EventCloud(np.ones((16, 5)) * 0.3, validity=0))
        np.testing.assert_array_equal(ad.value(small_left.theta), ad.value(big_left.theta))
        assert np.all(np.isfinite(ad.value(small_left.theta)))

    def test_attention_mode_changes_the_output(self):
        rng = np.random.default_rng(3)
        cloud = _cloud(rng)
        cross = HeadModel.initialize(SMALL)
        self_attn = HeadModel.initialize(dataclasses.replace(SMALL, attention_mode="self"))
        # same seed, same parameter tensors; only the wiring differs
        np.testing.assert_array_equal(
            cross.parameters["left.q.w"].data, self_attn.parameters["left.q.w"].data
        )
        left_cross, _ = forward_head(cross, cloud)
        left_self, _ = forward_head(self_attn, cloud)
        assert not np.array_equal(ad.value(left_cross.theta), ad.value(left_self.theta))

    def test_multi_head_matches_single_head_layout(self):
        config = dataclasses.replace(SMALL, heads=2)
        model = HeadModel.initialize(config)
        left, right = forward_head(model, _cloud(np.random.default_rng(4)))
        assert np.all(np.isfinite(ad.value(left.theta)))
        assert np.all(np.isfinite(ad.value(right.theta)))

    def test_non_finite_parameters_are_reported(self):
        model = HeadModel.initialize(SMALL)
        model.parameters["right.dec.0.w"].data[0, 0] = np.nan
        with pytest.raises(NonFiniteError):
            forward_head(model, _cloud(np.random.default_rng(5)))

    def test_deterministic(self):
        model = HeadModel.initialize(SMALL)
        cloud = _cloud(np.random.default_rng(6))
        first_left, _ = forward_head(model, cloud)
        second_left, _ = forward_head(model, cloud)
        np.testing.assert_array_equal(ad.value(first_left.theta), ad.value(second_left.theta))


class TestTrainToy:
    def test_empty_sample_set_is_rejected(self, minimal_rig):
        with pytest.raises(ConfigError):
            train_toy(HeadModel.initialize(SMALL), [], minimal_rig)

    def test_zero_epochs_is_a_no_op(self, minimal_rig, tmp_path):
        rng = np.random.default_rng(7)
        model = HeadModel.initialize(SMALL)
        before = _params_snapshot(model)
        log = tmp_path / "log.csv"
        history = train_toy(model, [_sample(minimal_rig, rng)], minimal_rig,
                            epochs=0, log_path=log)
        assert history == []
        for name, data in before.items():
            np.testing.assert_array_equal(model.parameters[name].data, data)
        assert log.read_text().strip() == "epoch," + ",".join(LOG_KEYS)

    def test_zero_learning_rate_freezes_the_model(self, minimal_rig):
        rng = np.random.default_rng(8)
        model = HeadModel.initialize(SMALL)
        before = _params_snapshot(model)
        history = train_toy(model, [_sample(minimal_rig, rng)], minimal_rig,
                            lr=0.0, epochs=3)
        assert len(history) == 3
        assert history[0]["L_total"] == history[1]["L_total"] == history[2]["L_total"]
        for name, data in before.items():
            np.testing.assert_array_equal(model.parameters[name].data, data)

    def test_loss_decreases_when_overfitting(self, minimal_rig):
        rng = np.random.default_rng(9)
        model = HeadModel.initialize(SMALL)
        samples = [_sample(minimal_rig, rng) for _ in range(2)]
        history = train_toy(model, samples, minimal_rig, lr=1e-2, epochs=15)
        assert len(history) == 15
        assert history[-1]["L_total"] < history[0]["L_total"]
        assert [row["epoch"] for row in history] == list(range(1, 16))

    def test_log_csv_round_trips_exactly(self, minimal_rig, tmp_path):
        rng = np.random.default_rng(10)
        model = HeadModel.initialize(SMALL)
        log = tmp_path / "log.csv"
        history = train_toy(model, [_sample(minimal_rig, rng)], minimal_rig,
                            lr=1e-3, epochs=4, log_path=log)
        with open(log, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["epoch", *LOG_KEYS]
        assert len(rows) == 5
        for row, entry in zip(rows[1:], history):
            assert int(row[0]) == entry["epoch"]
            for key, cell in zip(LOG_KEYS, row[1:]):
                assert float(cell) == entry[key]

    def test_rig_mapping_forms_agree(self, minimal_rig):
        rng_a = np.random.default_rng(11)
        rng_b = np.random.default_rng(11)
        single = train_toy(
            HeadModel.initialize(SMALL), [_sample(minimal_rig, rng_a)], minimal_rig,
            lr=1e-3, epochs=2,
        )
        mapped = train_toy(
            HeadModel.initialize(SMALL), [_sample(minimal_rig, rng_b)],
            {"left": minimal_rig, "right": minimal_rig}, lr=1e-3, epochs=2,
        )
        assert single == mapped

    def test_divergence_reports_the_step(self, minimal_rig):
        rng = np.random.default_rng(12)
        model = HeadModel.initialize(SMALL)
        # the last decoder layer has no tanh to squash the blow-up
        model.parameters["right.dec.1.w"].data[:] = 1e200
        with np.errstate(all="ignore"):
            with pytest.raises(NonFiniteError) as info:
                train_toy(model, [_sample(minimal_rig, rng)], minimal_rig, epochs=1)
        assert info.value.step == 0


class TestCheckpoint:
    def test_round_trip_preserves_everything(self, minimal_rig, tmp_path):
        rng = np.random.default_rng(13)
        model = HeadModel.initialize(SMALL)
        train_toy(model, [_sample(minimal_rig, rng)], minimal_rig, lr=1e-3, epochs=1)
        path = tmp_path / "head.evhd"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.config == model.config
        assert set(loaded.parameters) == set(model.parameters)
        for name, param in model.parameters.items():
            np.testing.assert_array_equal(loaded.parameters[name].data, param.data)
            assert loaded.parameters[name].requires_grad

        cloud = _cloud(rng)
        orig_left, _ = forward_head(model, cloud)
        load_left, _ = forward_head(loaded, cloud)
        np.testing.assert_array_equal(ad.value(orig_left.theta), ad.value(load_left.theta))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.evhd"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_truncated_file(self, tmp_path):
        model = HeadModel.initialize(SMALL)
        path = tmp_path / "cut.evhd"
        save_checkpoint(model, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-16])
        with pytest.raises(ParseError):
            load_checkpoint(path)
        path.write_bytes(b"EVHD\x01")
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_unsupported_version(self, tmp_path):
        model = HeadModel.initialize(SMALL)
        path = tmp_path / "v9.evhd"
        save_checkpoint(model, path)
        blob = bytearray(path.read_bytes())
        struct.pack_into("<I", blob, 4, 9)
        path.write_bytes(bytes(blob))
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_missing_tensor_is_detected(self, tmp_path):
        model = HeadModel.initialize(SMALL)
        del model.parameters["left.q.b"]
        path = tmp_path / "partial.evhd"
        save_checkpoint(model, path)
        with pytest.raises(ParseError, match="parameter names"):
            load_checkpoint(path)

    def test_corrupt_config_blob(self, tmp_path):
        model = HeadModel.initialize(SMALL)
        path = tmp_path / "garbled.evhd"
        save_checkpoint(model, path)
        blob = bytearray(path.read_bytes())
        (config_len,) = struct.unpack_from("<I", blob, 8)
        blob[16 : 16 + config_len] = b"x" * config_len
        path.write_bytes(bytes(blob))
        with pytest.raises(ParseError):
            load_checkpoint(path)
