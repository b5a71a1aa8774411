"""Reconstruction head: a per-point encoder with masked max-pooling, two
hand branches coupled by cross-attention, and per-branch decoders emitting
the 31 hand parameters (15 pose + 10 shape + 3 translation + 3 rotation).

Queries come from a branch's own tokens while keys and values come from
the opposite branch, so each hand's decoder sees the other hand's context;
``attention_mode="self"`` switches both to the same branch for ablation.

All parameters live on the float64 gradient tape from :mod:`evego.autodiff`.
Checkpoints use a small named-tensor container (magic ``EVHD``): a JSON
config header followed by one section per parameter, mirroring the rig
container layout.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tensor
from .errors import ConfigError, NonFiniteError, ParseError
from .hand_model import HandOutput, HandRig, ManoParams, forward
from .losses import HandLossWeights, HandState, LOG_KEYS, total_hand_loss
from .representations import EventCloud

CHECKPOINT_MAGIC = b"EVHD"
CHECKPOINT_VERSION = 1

PARAM_VECTOR_SIZE = 31  # 15 theta + 10 beta + 3 trans + 3 rot
SIDES = ("left", "right")


@dataclass(frozen=True)
class HeadConfig:
    point_feature_dims: tuple = (5, 64, 128)
    global_dim: int = 128
    attn_dim: int = 64
    heads: int = 1
    branch_tokens: int = 4
    decoder_dims: tuple = (64, PARAM_VECTOR_SIZE)
    attention_mode: str = "cross"
    seed: int = 0

    def __post_init__(self):
        if self.point_feature_dims[0] != 5:
            raise ConfigError("point encoder must start at the 5 cloud features")
        if self.global_dim != self.point_feature_dims[-1]:
            raise ConfigError("global_dim must equal the last encoder width")
        if self.decoder_dims[-1] != PARAM_VECTOR_SIZE:
            raise ConfigError(f"decoder must end at {PARAM_VECTOR_SIZE} outputs")
        if self.heads < 1 or self.attn_dim % self.heads != 0:
            raise ConfigError("attn_dim must be divisible by the head count")
        if self.branch_tokens < 1:
            raise ConfigError("need at least one branch token")
        if self.attention_mode not in ("cross", "self"):
            raise ConfigError(f"unknown attention_mode {self.attention_mode!r}")

    def to_dict(self) -> dict:
        return {
            "point_feature_dims": list(self.point_feature_dims),
            "global_dim": self.global_dim,
            "attn_dim": self.attn_dim,
            "heads": self.heads,
            "branch_tokens": self.branch_tokens,
            "decoder_dims": list(self.decoder_dims),
            "attention_mode": self.attention_mode,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "HeadConfig":
        return cls(
            point_feature_dims=tuple(payload["point_feature_dims"]),
            global_dim=payload["global_dim"],
            attn_dim=payload["attn_dim"],
            heads=payload["heads"],
            branch_tokens=payload["branch_tokens"],
            decoder_dims=tuple(payload["decoder_dims"]),
            attention_mode=payload["attention_mode"],
            seed=payload["seed"],
        )


def _layer_shapes(config: HeadConfig) -> list[tuple[str, tuple]]:
    """Parameter names and shapes in their fixed initialization order."""
    shapes: list[tuple[str, tuple]] = []
    dims = config.point_feature_dims
    for i in range(len(dims) - 1):
        shapes.append((f"enc.{i}.w", (dims[i], dims[i + 1])))
        shapes.append((f"enc.{i}.b", (dims[i + 1],)))
    token_width = config.branch_tokens * config.attn_dim
    for side in SIDES:
        shapes.append((f"{side}.tokens.w", (config.global_dim, token_width)))
        shapes.append((f"{side}.tokens.b", (token_width,)))
        for proj in ("q", "k", "v"):
            shapes.append((f"{side}.{proj}.w", (config.attn_dim, config.attn_dim)))
            shapes.append((f"{side}.{proj}.b", (config.attn_dim,)))
        decoder = (token_width, *config.decoder_dims)
        for i in range(len(decoder) - 1):
            shapes.append((f"{side}.dec.{i}.w", (decoder[i], decoder[i + 1])))
            shapes.append((f"{side}.dec.{i}.b", (decoder[i + 1],)))
    return shapes


@dataclass
class HeadModel:
    config: HeadConfig
    parameters: dict = field(default_factory=dict)

    @classmethod
    def initialize(cls, config: HeadConfig = HeadConfig()) -> "HeadModel":
        """Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and
        their biases, drawn in a fixed parameter order."""
        rng = np.random.default_rng(config.seed)
        parameters: dict[str, Tensor] = {}
        bound = 0.0
        for name, shape in _layer_shapes(config):
            if name.endswith(".w"):
                bound = 1.0 / np.sqrt(shape[0])
            data = rng.uniform(-bound, bound, size=shape)
            parameters[name] = Tensor(data, requires_grad=True)
        return cls(config=config, parameters=parameters)

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters.values())


def _decode_params(raw, side: str) -> ManoParams:
    if not np.all(np.isfinite(ad.value(raw))):
        raise NonFiniteError(f"non-finite decoder output for {side} hand")
    return ManoParams(
        theta=raw[0:15], beta=raw[15:25], trans=raw[25:28], rot=raw[28:31], side=side
    )


def forward_head(model: HeadModel, cloud: EventCloud) -> tuple[ManoParams, ManoParams]:
    """Run the head on one cloud; returns (left, right) parameter sets.

    Padding rows are dropped before the tape, so the max-pool only sees
    real points; a validity-0 cloud decodes a zero global feature, which is
    a defined constant output rather than an error.
    """
    config = model.config
    params = model.parameters

    points = cloud.points[: cloud.validity]
    if cloud.validity == 0:
        pooled = np.zeros(config.global_dim)
    else:
        hidden = points
        for i in range(len(config.point_feature_dims) - 1):
            hidden = ad.tanh(ad.matmul(hidden, params[f"enc.{i}.w"]) + params[f"enc.{i}.b"])
        pooled = ad.max_(hidden, axis=0)

    tokens = {}
    for side in SIDES:
        flat = ad.tanh(ad.matmul(pooled, params[f"{side}.tokens.w"]) + params[f"{side}.tokens.b"])
        tokens[side] = ad.reshape(flat, (config.branch_tokens, config.attn_dim))

    outputs = {}
    head_dim = config.attn_dim // config.heads
    scale = 1.0 / np.sqrt(head_dim)
    for side in SIDES:
        other = "right" if side == "left" else "left"
        source = tokens[side] if config.attention_mode == "self" else tokens[other]
        q = ad.matmul(tokens[side], params[f"{side}.q.w"]) + params[f"{side}.q.b"]
        k = ad.matmul(source, params[f"{side}.k.w"]) + params[f"{side}.k.b"]
        v = ad.matmul(source, params[f"{side}.v.w"]) + params[f"{side}.v.b"]
        attended_heads = []
        for h in range(config.heads):
            cols = slice(h * head_dim, (h + 1) * head_dim)
            scores = ad.matmul(q[:, cols], k[:, cols].T) * scale
            attended_heads.append(ad.matmul(ad.softmax(scores, axis=-1), v[:, cols]))
        attended = (
            attended_heads[0]
            if config.heads == 1
            else ad.concatenate(attended_heads, axis=1)
        )
        vector = ad.reshape(attended, (config.branch_tokens * config.attn_dim,))
        decoder = (config.branch_tokens * config.attn_dim, *config.decoder_dims)
        for i in range(len(decoder) - 1):
            vector = ad.matmul(vector, params[f"{side}.dec.{i}.w"]) + params[f"{side}.dec.{i}.b"]
            if i < len(decoder) - 2:
                vector = ad.tanh(vector)
        outputs[side] = vector

    return _decode_params(outputs["left"], "left"), _decode_params(outputs["right"], "right")


# -- training --------------------------------------------------------------


@dataclass
class TrainingSample:
    """One supervised window: input cloud plus per-side ground truth."""

    cloud: EventCloud
    gt_params: Mapping[str, ManoParams]
    gt_outputs: Mapping[str, HandOutput]


def _rig_map(rig) -> Mapping[str, HandRig]:
    if isinstance(rig, HandRig):
        return {side: rig for side in SIDES}
    return rig


def train_toy(
    model: HeadModel,
    samples: Sequence[TrainingSample],
    rig,
    weights: HandLossWeights = HandLossWeights(),
    lr: float = 1e-2,
    epochs: int = 200,
    log_path=None,
) -> list[dict]:
    """Overfit the head on a small sample set with per-sample Adam steps.

    ``rig`` is a HandRig used for both sides or a {side: HandRig} mapping.
    Returns one component-loss dict per epoch (means over samples) and
    optionally writes them as CSV with columns epoch,L_joints,L_interhand,
    L_vertices,L_MANO,L_total. Aborts with the global step index if a loss
    goes non-finite.
    """
    if not samples:
        raise ConfigError("training set is empty")
    rigs = _rig_map(rig)
    optimizer = Adam(list(model.parameters.values()), lr=lr)
    history: list[dict] = []
    step = 0
    for epoch in range(1, epochs + 1):
        sums = dict.fromkeys(LOG_KEYS, 0.0)
        for sample in samples:
            optimizer.zero_grad()
            left, right = forward_head(model, sample.cloud)
            predicted = {"left": left, "right": right}
            pred_states = {
                side: HandState(params=predicted[side], output=forward(rigs[side], predicted[side]))
                for side in sample.gt_params
            }
            gt_states = {
                side: HandState(params=sample.gt_params[side], output=sample.gt_outputs[side])
                for side in sample.gt_params
            }
            total, components = total_hand_loss(pred_states, gt_states, weights)
            if not np.isfinite(float(ad.value(total))):
                raise NonFiniteError("training loss went non-finite", step=step)
            total.backward()
            optimizer.step()
            step += 1
            for key in LOG_KEYS:
                sums[key] += float(ad.value(components[key]))
        history.append(
            {"epoch": epoch, **{key: sums[key] / len(samples) for key in LOG_KEYS}}
        )
    if log_path is not None:
        write_training_log(history, log_path)
    return history


def write_training_log(history: Sequence[dict], path) -> None:
    with open(path, "w", encoding="ascii", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["epoch", *LOG_KEYS])
        for row in history:
            writer.writerow([row["epoch"], *(f"{row[key]:.17g}" for key in LOG_KEYS)])


# -- checkpoint IO ---------------------------------------------------------


def save_checkpoint(model: HeadModel, path) -> None:
    config_blob = json.dumps(model.config.to_dict(), sort_keys=True).encode("ascii")
    with open(path, "wb") as handle:
        handle.write(CHECKPOINT_MAGIC)
        handle.write(struct.pack("<III", CHECKPOINT_VERSION, len(config_blob), len(model.parameters)))
        handle.write(config_blob)
        for name in sorted(model.parameters):
            _write_tensor(handle, name, model.parameters[name].data)


def _write_tensor(handle: BinaryIO, name: str, data: np.ndarray) -> None:
    encoded = name.encode("ascii")
    payload = np.ascontiguousarray(data, dtype="<f8")
    handle.write(struct.pack("<B", len(encoded)))
    handle.write(encoded)
    handle.write(struct.pack("<B", payload.ndim))
    handle.write(struct.pack(f"<{payload.ndim}I", *payload.shape))
    handle.write(payload.tobytes())


def load_checkpoint(path) -> HeadModel:
    with open(path, "rb") as handle:
        blob = handle.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: bad magic {blob[:4]!r}")
    try:
        version, config_len, n_tensors = struct.unpack_from("<III", blob, 4)
        if version != CHECKPOINT_VERSION:
            raise ParseError(f"{path}: unsupported version {version}")
        offset = 16
        config = HeadConfig.from_dict(json.loads(blob[offset : offset + config_len].decode("ascii")))
        offset += config_len
        parameters: dict[str, Tensor] = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            name = blob[offset : offset + name_len].decode("ascii")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            dims = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
            end = offset + 8 * count
            if end > len(blob):
                raise struct.error("payload past end of file")
            parameters[name] = Tensor(
                np.frombuffer(blob[offset:end], dtype="<f8").reshape(dims).copy(),
                requires_grad=True,
            )
            offset = end
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError, KeyError) as exc:
        raise ParseError(f"{path}: truncated or corrupt checkpoint: {exc}") from exc
    expected = {name for name, _ in _layer_shapes(config)}
    if set(parameters) != expected:
        raise ParseError(f"{path}: parameter names do not match the config")
    return HeadModel(config=config, parameters=parameters)
