"""Recordings, channel normalization, window segmentation, and noise injection.

The two normalizers follow the scikit-learn transformer protocol so they
compose with pipelines: statistics are learned on the training split via
``fit`` and reused verbatim on validation/test data via ``transform``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .exceptions import (
    ConfigurationError,
    DegenerateChannelError,
    DimensionError,
    RangeError,
)
from .tensor import RngState

__all__ = [
    "Recording",
    "SignalSequence",
    "NoiseSpec",
    "MinMaxChannelScaler",
    "MuLawCompander",
    "fit_normalizers",
    "normalize_recordings",
    "segment_windows",
    "window_count",
    "inject_noise",
]

Label = Union[int, np.ndarray]


@dataclass
class Recording:
    """A multi-sensor capture: (n_samples, c) matrix plus metadata.

    ``label`` is either a gesture id or an (n_samples, n_joints) joint-angle
    trajectory in degrees.
    """

    samples: np.ndarray
    sample_rate_hz: float
    label: Label
    subject_id: str = "anonymous"

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise DimensionError(f"samples must be 2-D (n_samples, c), got {self.samples.shape}")
        if self.sample_rate_hz <= 0:
            raise ConfigurationError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if isinstance(self.label, np.ndarray):
            if self.label.ndim != 2 or len(self.label) != len(self.samples):
                raise DimensionError(
                    f"trajectory label must be (n_samples, n_joints); got "
                    f"{self.label.shape} for {len(self.samples)} samples"
                )
            self.label = np.asarray(self.label, dtype=np.float64)

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def n_channels(self):
        return self.samples.shape[1]

    @property
    def is_regression(self):
        return isinstance(self.label, np.ndarray)


@dataclass
class SignalSequence:
    """One model input window: (t, c) values with the inherited label."""

    values: np.ndarray
    label: Label
    subject_id: str = "anonymous"
    source_index: int = 0
    start_sample: int = 0

    @property
    def steps(self):
        return self.values.shape[0]

    @property
    def n_channels(self):
        return self.values.shape[1]


@dataclass
class NoiseSpec:
    """Evaluation-time perturbation: mode, intensity, and seed.

    Intensity is the Gaussian sigma for the two Gaussian modes and the
    per-entry drop probability for ``signal-loss``.
    """

    mode: str
    intensity: float
    seed: int = 0

    MODES = ("additive-gaussian", "multiplicative-gaussian", "signal-loss")

    def __post_init__(self):
        if self.mode not in self.MODES:
            raise ConfigurationError(f"unknown noise mode {self.mode!r}; expected one of {self.MODES}")
        if self.intensity < 0:
            raise ConfigurationError(f"noise intensity must be >= 0, got {self.intensity}")
        if self.mode == "signal-loss" and self.intensity > 1:
            raise ConfigurationError(f"signal-loss probability must be <= 1, got {self.intensity}")


def _stack_samples(X):
    """Accept a 2-D array, a 3-D window stack, or a list of Recordings."""
    if isinstance(X, np.ndarray):
        if X.ndim == 2:
            return X
        if X.ndim == 3:
            return X.reshape(-1, X.shape[-1])
        raise DimensionError(f"expected 2-D or 3-D array, got shape {X.shape}")
    rows = [r.samples if isinstance(r, Recording) else np.asarray(r, dtype=np.float64) for r in X]
    return np.concatenate(rows, axis=0)


def _map_values(X, fn):
    """Apply an entrywise transform, preserving the container's structure."""
    if isinstance(X, np.ndarray):
        return fn(X)
    if isinstance(X, Recording):
        return replace(X, samples=fn(X.samples))
    if isinstance(X, SignalSequence):
        return replace(X, values=fn(X.values))
    return [_map_values(item, fn) for item in X]


class MinMaxChannelScaler(BaseEstimator, TransformerMixin):
    """Affine per-channel map onto [-1, 1] using training-split extrema.

    ``fit`` accepts a (n, c) array, an (n_windows, t, c) stack, or a list of
    Recordings; ``transform`` maps any of those, returning the same kind.
    With ``clip`` (default), values outside the fitted range (possible on
    held-out data) are clamped to the feature range so downstream companding
    stays in its domain.
    """

    def __init__(self, feature_range=(-1.0, 1.0), clip=True):
        self.feature_range = feature_range
        self.clip = clip

    def fit(self, X, y=None):
        samples = _stack_samples(X)
        self.data_min_ = samples.min(axis=0)
        self.data_max_ = samples.max(axis=0)
        flat = np.flatnonzero(self.data_max_ == self.data_min_)
        if flat.size:
            raise DegenerateChannelError(
                f"channel(s) {flat.tolist()} are constant; min-max range is zero"
            )
        return self

    def transform(self, X):
        if not hasattr(self, "data_min_"):
            raise NotFittedError("MinMaxChannelScaler must be fitted before transform")
        lo, hi = self.feature_range
        span = self.data_max_ - self.data_min_

        def fn(values):
            out = (values - self.data_min_) / span * (hi - lo) + lo
            return np.clip(out, lo, hi) if self.clip else out

        return _map_values(X, fn)

    def inverse_transform(self, X):
        if not hasattr(self, "data_min_"):
            raise NotFittedError("MinMaxChannelScaler must be fitted before inverse_transform")
        lo, hi = self.feature_range
        span = self.data_max_ - self.data_min_

        def fn(values):
            return (values - lo) / (hi - lo) * span + self.data_min_

        return _map_values(X, fn)


class MuLawCompander(BaseEstimator, TransformerMixin):
    """Logarithmic companding F(x) = sign(x) ln(1 + mu|x|) / ln(1 + mu).

    Amplifies small magnitudes; expects inputs already scaled to [-1, 1]
    (apply after MinMaxChannelScaler). Stateless, so ``fit`` only validates.
    """

    def __init__(self, mu=255.0):
        self.mu = mu

    def fit(self, X, y=None):
        if self.mu <= 0:
            raise ConfigurationError(f"mu must be positive, got {self.mu}")
        return self

    def transform(self, X):
        mu = float(self.mu)
        denom = np.log1p(mu)

        def fn(values):
            if np.abs(values).max(initial=0.0) > 1.0 + 1e-12:
                raise RangeError(
                    f"mu-law input must lie in [-1, 1]; max |x| = {np.abs(values).max():.6g}"
                )
            return np.sign(values) * np.log1p(mu * np.abs(values)) / denom

        return _map_values(X, fn)

    def inverse_transform(self, X):
        mu = float(self.mu)

        def fn(values):
            return np.sign(values) * ((1.0 + mu) ** np.abs(values) - 1.0) / mu

        return _map_values(X, fn)


_NORMALIZERS = {
    "minmax": MinMaxChannelScaler,
    "mulaw": MuLawCompander,
}


def fit_normalizers(chain, train_recordings, mu=255.0):
    """Fit a named normalization chain on the training split, in order."""
    fitted = []
    current = train_recordings
    for name in chain:
        if name not in _NORMALIZERS:
            raise ConfigurationError(
                f"unknown normalizer {name!r}; expected subset of {sorted(_NORMALIZERS)}"
            )
        scaler = MuLawCompander(mu=mu) if name == "mulaw" else MinMaxChannelScaler()
        scaler.fit(current)
        current = scaler.transform(current)
        fitted.append(scaler)
    return fitted


def normalize_recordings(fitted, recordings):
    current = recordings
    for scaler in fitted:
        current = scaler.transform(current)
    return current


def window_count(n_samples, window_samples, overlap_samples):
    if n_samples < window_samples:
        return 0
    return (n_samples - window_samples) // (window_samples - overlap_samples) + 1


def segment_windows(recording, window_ms, overlap_ms=0.0, source_index=0):
    """Slice a recording into fixed windows starting every (window - overlap).

    The trailing partial window is discarded. Each window inherits the
    recording label; trajectory labels are sliced alongside the samples.
    """
    if overlap_ms < 0 or window_ms <= overlap_ms:
        raise ConfigurationError(
            f"need window_ms > overlap_ms >= 0, got window={window_ms}, overlap={overlap_ms}"
        )
    rate = recording.sample_rate_hz
    length = round(window_ms * rate / 1000.0)
    if length < 2:
        raise ConfigurationError(f"window of {window_ms} ms at {rate} Hz spans {length} samples; need >= 2")
    stride = round((window_ms - overlap_ms) * rate / 1000.0)
    if stride < 1:
        raise ConfigurationError("window stride rounds to zero samples")

    n = recording.n_samples
    if n < length:
        warnings.warn(
            f"recording of {n} samples is shorter than one {length}-sample window; no output",
            stacklevel=2,
        )
        return []

    windows = []
    for start in range(0, n - length + 1, stride):
        label = recording.label
        if recording.is_regression:
            label = recording.label[start : start + length]
        windows.append(
            SignalSequence(
                values=recording.samples[start : start + length].copy(),
                label=label,
                subject_id=recording.subject_id,
                source_index=source_index,
                start_sample=start,
            )
        )
    return windows


def inject_noise(window, spec):
    """Perturb one window per the spec; pure given (input, seed).

    Evaluation-time only: models are trained on clean data and the noise
    modes emulate acquisition-time degradation.
    """
    rng = RngState(spec.seed)
    values = np.asarray(window.values if isinstance(window, SignalSequence) else window, dtype=np.float64)
    if spec.mode == "additive-gaussian":
        out = values + rng.normal(0.0, 1.0, size=values.shape) * spec.intensity
    elif spec.mode == "multiplicative-gaussian":
        out = values * (1.0 + rng.normal(0.0, 1.0, size=values.shape) * spec.intensity)
    else:  # signal-loss
        out = values * (rng.uniform(size=values.shape) >= spec.intensity)
    if isinstance(window, SignalSequence):
        return replace(window, values=out)
    return out
