"""Training objectives: masked reconstruction, asymmetric classification,
cross-entropy baseline, and regression MSE.

The asymmetric loss treats C-way recognition as C independent binary
problems. Positive terms are focused by (1 - p)^gamma_plus; negative terms
are margin-shifted (p - m, clamped at 0) and focused by the shifted
probability raised to gamma_minus, so confident negatives below the margin
contribute exactly zero loss and zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exceptions import ConfigurationError, DegenerateMaskError, DimensionError, NumericError
from .masking import MaskMatrix

__all__ = [
    "AsymmetricLossConfig",
    "asymmetric_loss",
    "cross_entropy_loss",
    "masked_mse_loss",
    "mse_regression_loss",
    "one_hot",
]

EPS = 1e-12


@dataclass
class AsymmetricLossConfig:
    gamma_plus: float = 1.0
    gamma_minus: float = 0.0
    margin: float = 0.05

    def __post_init__(self):
        if self.gamma_plus < 0 or self.gamma_minus < 0:
            raise ConfigurationError("focusing exponents must be >= 0")
        if not 0.0 <= self.margin < 1.0:
            raise ConfigurationError(f"margin must lie in [0, 1), got {self.margin}")


def one_hot(labels, n_classes):
    labels = np.asarray(labels, dtype=int)
    out = np.zeros(labels.shape + (n_classes,))
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


def asymmetric_loss(y_true, probs, cfg=None):
    """Asymmetric binary-per-class loss, summed over classes and batch.

    ``y_true`` is a {0,1} array of the same shape as the probability tensor.
    """
    cfg = cfg or AsymmetricLossConfig()
    y = np.asarray(y_true, dtype=np.float64)
    if not isinstance(probs, T.Tensor):
        probs = T.Tensor(probs)
    if y.shape != probs.shape:
        raise DimensionError(f"targets {y.shape} vs probabilities {probs.shape}")
    if not np.isfinite(probs.data).all():
        raise NumericError("probabilities contain non-finite values")

    p = T.clamp(probs, EPS, 1.0 - EPS)
    pos = T.mul(T.mul(y, T.power(T.sub(1.0, p), cfg.gamma_plus)), T.log(p))
    shifted = T.relu(T.sub(p, cfg.margin))
    neg = T.mul(
        T.mul(1.0 - y, T.power(shifted, cfg.gamma_minus)),
        T.log(T.sub(1.0, shifted)),
    )
    return T.neg(T.add(T.tsum(pos), T.tsum(neg)))


def cross_entropy_loss(labels, logits):
    """Softmax cross-entropy, mean over the batch (ablation baseline)."""
    if not isinstance(logits, T.Tensor):
        logits = T.Tensor(logits)
    n_classes = logits.shape[-1]
    labels = np.asarray(labels)
    y = labels if labels.ndim == logits.ndim else one_hot(labels, n_classes)
    lse = T.logsumexp_lastdim(logits, keepdims=True)
    logp = T.sub(logits, lse)
    picked = T.tsum(T.mul(logp, y), axis=-1)
    return T.neg(T.tmean(picked))


def masked_mse_loss(x_true, x_rec, mask):
    """MSE over masked entries only; per-sample means averaged over a batch.

    Shapes are (t, c) or (batch, t, c) with a matching mask (False = masked).
    """
    values = mask.values if isinstance(mask, MaskMatrix) else np.asarray(mask, dtype=bool)
    if not isinstance(x_rec, T.Tensor):
        x_rec = T.Tensor(x_rec)
    x_true = np.asarray(x_true, dtype=np.float64)
    if x_true.shape != x_rec.shape or values.shape != x_rec.shape:
        raise DimensionError(
            f"shape mismatch: true {x_true.shape}, reconstructed {x_rec.shape}, mask {values.shape}"
        )
    masked = ~values
    if masked.ndim == 2:
        count = masked.sum()
        if count == 0:
            raise DegenerateMaskError("mask selects no entries to reconstruct")
        weight = masked / count
    else:
        counts = masked.sum(axis=(-2, -1), keepdims=True)
        if (counts == 0).any():
            raise DegenerateMaskError("a batch sample's mask selects no entries")
        weight = masked / counts / masked.shape[0]
    diff = T.sub(x_rec, x_true)
    return T.tsum(T.mul(T.mul(diff, diff), weight))


def mse_regression_loss(y_true, y_pred):
    """Mean squared residual over joints and batch."""
    if not isinstance(y_pred, T.Tensor):
        y_pred = T.Tensor(y_pred)
    y_true = np.asarray(y_true, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise DimensionError(f"targets {y_true.shape} vs predictions {y_pred.shape}")
    diff = T.sub(y_pred, y_true)
    return T.tmean(T.mul(diff, diff))
