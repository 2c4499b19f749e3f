"""Scikit-learn style estimators wrapping the network and training loops.

``STETClassifier`` / ``STETRegressor`` consume window stacks of shape
(n_samples, steps, sensors); the channel normalizers in ``stet.signal``
accept the same stacks, so everything composes in a sklearn Pipeline.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.exceptions import NotFittedError

from .config import LossSection
from .exceptions import DimensionError, RangeError
from .model import ModelConfig
from .optim import OptimizerConfig
from .signal import MinMaxChannelScaler, MuLawCompander
from .training import (
    predict_angles,
    predict_classes,
    predict_probs,
    pretrain_arrays,
    train_supervised_arrays,
)

__all__ = [
    "STETClassifier",
    "STETRegressor",
    "MinMaxChannelScaler",
    "MuLawCompander",
    "check_window_array",
]


def check_window_array(X, steps=None, sensors=None):
    """Validate a (n_samples, steps, sensors) window stack."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise DimensionError(f"expected (n_samples, steps, sensors) windows, got shape {X.shape}")
    if steps is not None and X.shape[1] != steps:
        raise DimensionError(f"expected {steps} steps per window, got {X.shape[1]}")
    if sensors is not None and X.shape[2] != sensors:
        raise DimensionError(f"expected {sensors} sensors, got {X.shape[2]}")
    if not np.isfinite(X).all():
        raise RangeError("window array contains non-finite values")
    return X


class _BaseSTET(BaseEstimator):
    def __init__(
        self,
        hidden=64,
        encoder_layers=2,
        heads=4,
        long_layers=2,
        short_layers=2,
        short_windows=(41, 21),
        dropout=0.2,
        ffn_multiplier=4,
        per_head_scale=False,
        streams="fused",
        lr=1e-4,
        weight_decay=1e-3,
        batch_size=16,
        epochs=50,
        pretrain_epochs=0,
        mask_ratio=0.15,
        mask_mean_length=3.0,
        random_state=0,
    ):
        self.hidden = hidden
        self.encoder_layers = encoder_layers
        self.heads = heads
        self.long_layers = long_layers
        self.short_layers = short_layers
        self.short_windows = short_windows
        self.dropout = dropout
        self.ffn_multiplier = ffn_multiplier
        self.per_head_scale = per_head_scale
        self.streams = streams
        self.lr = lr
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.epochs = epochs
        self.pretrain_epochs = pretrain_epochs
        self.mask_ratio = mask_ratio
        self.mask_mean_length = mask_mean_length
        self.random_state = random_state

    def _model_config(self, X, n_classes=None, n_joints=None):
        return ModelConfig(
            sensors=X.shape[2],
            steps=X.shape[1],
            hidden=self.hidden,
            encoder_layers=self.encoder_layers,
            heads=self.heads,
            long_layers=self.long_layers,
            short_layers=self.short_layers,
            short_windows=tuple(self.short_windows),
            n_classes=n_classes,
            n_joints=n_joints,
            dropout=self.dropout,
            ffn_multiplier=self.ffn_multiplier,
            per_head_scale=self.per_head_scale,
            streams=self.streams,
        )

    def _optimizer_config(self):
        return OptimizerConfig(lr=self.lr, weight_decay=self.weight_decay)

    def _maybe_pretrain(self, X, mcfg):
        if self.pretrain_epochs <= 0:
            return None
        params, _, _ = pretrain_arrays(
            X,
            mcfg,
            self.mask_ratio,
            self.mask_mean_length,
            self._optimizer_config(),
            self.pretrain_epochs,
            self.batch_size,
            self.random_state,
        )
        return params

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError(f"{type(self).__name__} must be fitted before predicting")


class STETClassifier(_BaseSTET, ClassifierMixin):
    """Gesture classifier over fixed-length multi-channel windows.

    ``fit(X, y)`` optionally self-pretrains on X (``pretrain_epochs > 0``)
    before supervised training with the asymmetric loss. ``predict_proba``
    returns the per-class independent (sigmoid) probabilities; rows need not
    sum to one.
    """

    def __init__(
        self,
        loss="asymmetric",
        gamma_plus=1.0,
        gamma_minus=0.0,
        margin=0.05,
        **kwargs,
    ):
        super().__init__(**kwargs)
        self.loss = loss
        self.gamma_plus = gamma_plus
        self.gamma_minus = gamma_minus
        self.margin = margin

    # sklearn requires every constructor arg as an explicit keyword; rebuild
    # the full signature for get_params by merging the base parameters.
    @classmethod
    def _get_param_names(cls):
        base = _BaseSTET._get_param_names()
        own = ["loss", "gamma_plus", "gamma_minus", "margin"]
        return sorted(set(base) | set(own))

    def fit(self, X, y):
        X = check_window_array(X)
        y = np.asarray(y)
        if y.ndim != 1 or len(y) != len(X):
            raise DimensionError(f"labels must be 1-D with {len(X)} entries, got {y.shape}")
        self.classes_ = np.unique(y)
        encoded = np.searchsorted(self.classes_, y)
        mcfg = self._model_config(X, n_classes=len(self.classes_))
        init_store = self._maybe_pretrain(X, mcfg)
        loss_cfg = LossSection(
            kind=self.loss,
            gamma_plus=self.gamma_plus,
            gamma_minus=self.gamma_minus,
            margin=self.margin,
        )
        self.params_, _, self.train_log_ = train_supervised_arrays(
            "classify",
            X,
            encoded,
            mcfg,
            loss_cfg,
            self._optimizer_config(),
            self.epochs,
            self.batch_size,
            self.random_state,
            init_store=init_store,
        )
        self.model_config_ = mcfg
        return self

    def predict_proba(self, X):
        self._check_fitted()
        X = check_window_array(X, self.model_config_.steps, self.model_config_.sensors)
        return predict_probs(self.params_, self.model_config_, X)

    def predict(self, X):
        self._check_fitted()
        X = check_window_array(X, self.model_config_.steps, self.model_config_.sensors)
        return self.classes_[predict_classes(self.params_, self.model_config_, X)]


class STETRegressor(_BaseSTET, RegressorMixin):
    """Joint-angle regressor: same trunk, linear output head, MSE objective."""

    def fit(self, X, y):
        X = check_window_array(X)
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        if len(y) != len(X):
            raise DimensionError(f"targets must have {len(X)} rows, got {y.shape}")
        mcfg = self._model_config(X, n_joints=y.shape[1])
        init_store = self._maybe_pretrain(X, mcfg)
        self.params_, extras, self.train_log_ = train_supervised_arrays(
            "regress",
            X,
            y,
            mcfg,
            LossSection(kind="asymmetric"),
            self._optimizer_config(),
            self.epochs,
            self.batch_size,
            self.random_state,
            init_store=init_store,
        )
        self.target_mean_ = extras["target_mean"]
        self.target_std_ = extras["target_std"]
        self.model_config_ = mcfg
        return self

    def predict(self, X):
        self._check_fitted()
        X = check_window_array(X, self.model_config_.steps, self.model_config_.sensors)
        return predict_angles(
            self.params_, self.model_config_, X, self.target_mean_, self.target_std_
        )
