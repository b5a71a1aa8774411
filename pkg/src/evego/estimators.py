"""Estimator-style wrappers over the functional core so pipeline stages
compose with scikit-learn tooling (get_params/set_params/clone).

Transformers here are stateless converters between pipeline value types;
the one trainable piece is :class:`HandMeshEstimator`, which owns a head
model and fits it on TrainingSample lists.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .dvs import DvsConfig, FrameSequence, simulate_events
from .errors import ConfigError
from .events import EventStream, EventWindow, WindowConfig, partition_windows, validate_stream
from .hand_model import HandOutput, ManoParams, forward
from .head import HeadConfig, HeadModel, forward_head, train_toy
from .losses import HandLossWeights
from .masks import DensityMaskPredictor, filter_cloud
from .representations import (
    DEFAULT_CLOUD_BUDGET,
    EventCloud,
    LnesFrame,
    build_cloud,
    build_history_cloud,
    build_lnes,
)


class DvsEventSimulator(BaseEstimator, TransformerMixin):
    """FrameSequence -> EventStream under the threshold-crossing model."""

    def __init__(self, contrast_threshold=0.2, log_eps=1e-3, seed=0):
        self.contrast_threshold = contrast_threshold
        self.log_eps = log_eps
        self.seed = seed

    def fit(self, X=None, y=None):
        return self

    def transform(self, X: FrameSequence) -> EventStream:
        config = DvsConfig(
            contrast_threshold=self.contrast_threshold, log_eps=self.log_eps, seed=self.seed
        )
        return simulate_events(X, config)


class WindowPartitioner(BaseEstimator, TransformerMixin):
    """EventStream -> list[EventWindow] on a fixed-duration grid."""

    def __init__(self, window_duration=33333, history_length=3):
        self.window_duration = window_duration
        self.history_length = history_length

    def fit(self, X=None, y=None):
        return self

    def transform(self, X: EventStream) -> list[EventWindow]:
        config = WindowConfig(
            window_duration=self.window_duration, history_length=self.history_length
        )
        return partition_windows(validate_stream(X), config)


class LnesEncoder(BaseEstimator, TransformerMixin):
    """list[EventWindow] -> list[LnesFrame]."""

    def fit(self, X=None, y=None):
        return self

    def transform(self, X) -> list[LnesFrame]:
        windows = list(X)
        if not windows:
            return []
        geometry = windows[0].events.geometry
        return build_lnes(windows, geometry)


class EventCloudEncoder(BaseEstimator, TransformerMixin):
    """EventWindow or window history -> one fixed-budget EventCloud."""

    def __init__(self, budget=DEFAULT_CLOUD_BUDGET, seed=0):
        self.budget = budget
        self.seed = seed

    def fit(self, X=None, y=None):
        return self

    def transform(self, X) -> EventCloud:
        if isinstance(X, EventWindow):
            return build_cloud(X, X.events.geometry, budget=self.budget, seed=self.seed)
        windows = list(X)
        if not windows:
            raise ConfigError("cannot encode an empty window history")
        geometry = windows[0].events.geometry
        return build_history_cloud(windows, geometry, budget=self.budget, seed=self.seed)


class MaskedCloudEncoder(BaseEstimator, TransformerMixin):
    """Window history -> mask-filtered EventCloud.

    The mask comes from ``mask_predictor`` applied to the history's LNES
    frames (density heuristic by default, or any predict(frames) object).
    """

    def __init__(self, mask_predictor=None, budget=DEFAULT_CLOUD_BUDGET, seed=0):
        self.mask_predictor = mask_predictor
        self.budget = budget
        self.seed = seed

    def fit(self, X=None, y=None):
        return self

    def transform(self, X) -> EventCloud:
        windows = list(X)
        if not windows:
            raise ConfigError("cannot encode an empty window history")
        geometry = windows[0].events.geometry
        predictor = self.mask_predictor if self.mask_predictor is not None else DensityMaskPredictor()
        mask = predictor.predict(build_lnes(windows, geometry))
        return filter_cloud(windows, mask, geometry, budget=self.budget, seed=self.seed)


class HandMeshEstimator(BaseEstimator):
    """Trainable two-hand reconstructor: EventCloud -> per-side parameters.

    fit() overfits the head on TrainingSample lists via the toy trainer;
    predict() decodes parameter pairs, and predict_outputs() additionally
    poses the rig(s) passed at fit time.
    """

    def __init__(
        self,
        attention_mode="cross",
        branch_tokens=4,
        attn_dim=64,
        heads=1,
        seed=0,
        lr=1e-2,
        epochs=200,
        lambda_gamma=0.1,
        lambda_delta=1.0,
        lambda_epsilon=1.0,
        lambda_zeta=20.0,
    ):
        self.attention_mode = attention_mode
        self.branch_tokens = branch_tokens
        self.attn_dim = attn_dim
        self.heads = heads
        self.seed = seed
        self.lr = lr
        self.epochs = epochs
        self.lambda_gamma = lambda_gamma
        self.lambda_delta = lambda_delta
        self.lambda_epsilon = lambda_epsilon
        self.lambda_zeta = lambda_zeta

    def _config(self) -> HeadConfig:
        return HeadConfig(
            attn_dim=self.attn_dim,
            heads=self.heads,
            branch_tokens=self.branch_tokens,
            attention_mode=self.attention_mode,
            seed=self.seed,
        )

    def fit(self, X, y=None, rig=None):
        """X: sequence of TrainingSample; rig: HandRig or {side: HandRig}."""
        if rig is None:
            raise ConfigError("fit needs the rig the ground truth was posed with")
        self.model_ = HeadModel.initialize(self._config())
        weights = HandLossWeights(
            lambda_gamma=self.lambda_gamma,
            lambda_delta=self.lambda_delta,
            lambda_epsilon=self.lambda_epsilon,
            lambda_zeta=self.lambda_zeta,
        )
        self.history_ = train_toy(
            self.model_, list(X), rig, weights=weights, lr=self.lr, epochs=self.epochs
        )
        self.rig_ = rig
        return self

    def predict(self, X: EventCloud) -> tuple[ManoParams, ManoParams]:
        self._check_fitted()
        left, right = forward_head(self.model_, X)
        return self._detach(left), self._detach(right)

    def predict_outputs(self, X: EventCloud) -> dict[str, HandOutput]:
        self._check_fitted()
        left, right = self.predict(X)
        rigs = self.rig_ if isinstance(self.rig_, dict) else {"left": self.rig_, "right": self.rig_}
        return {
            "left": forward(rigs["left"], left),
            "right": forward(rigs["right"], right),
        }

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise ConfigError("estimator is not fitted; call fit first")

    @staticmethod
    def _detach(params: ManoParams) -> ManoParams:
        from . import autodiff as ad

        return ManoParams(
            theta=np.array(ad.value(params.theta)),
            beta=np.array(ad.value(params.beta)),
            trans=np.array(ad.value(params.trans)),
            rot=np.array(ad.value(params.rot)),
            side=params.side,
        )
