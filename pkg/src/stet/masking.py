"""Sensor-wise segment masking for self-supervised pretraining.

Each sensor column is an alternating sequence of kept and masked runs.
Run lengths are geometric: masked runs have mean ``l_m``, kept runs have
mean ``l_m * (1 - r) / r``, so the expected masked fraction is ``r``.
True = kept, False = masked (masked entries are the ones zeroed out and
reconstructed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, DimensionError

__all__ = ["MaskMatrix", "generate_mask_column", "generate_mask_matrix", "apply_mask"]


@dataclass
class MaskMatrix:
    """A (t, c) boolean mask; False marks masked positions."""

    values: np.ndarray
    r: float
    l_m: float

    @property
    def shape(self):
        return self.values.shape

    def masked_count(self):
        return int((~self.values).sum())

    def masked_fraction(self):
        return float((~self.values).mean())


def _check_params(r, l_m):
    if not 0.0 < r < 1.0:
        raise ConfigurationError(f"masked ratio r must lie in (0, 1), got {r}")
    if l_m < 1:
        raise ConfigurationError(f"mean masked-segment length must be >= 1, got {l_m}")


def generate_mask_column(t, l_m, r, rng):
    """One sensor's kept/masked state sequence of length ``t``.

    Two-state Markov chain: start kept with probability 1 - r; after
    emitting each state, flip with probability 1/l_m from masked and
    (1/l_m) * r / (1 - r) from kept.
    """
    _check_params(r, l_m)
    p_masked_stop = 1.0 / l_m
    p_kept_stop = p_masked_stop * r / (1.0 - r)
    draws = rng.uniform(size=t + 1)
    kept = bool(draws[0] > r)
    column = np.empty(t, dtype=bool)
    flip = (p_masked_stop, p_kept_stop)
    for j in range(t):
        column[j] = kept
        if draws[j + 1] < flip[kept]:
            kept = not kept
    return column


def generate_mask_matrix(t, c, l_m, r, rng):
    """Independent mask columns for ``c`` sensors, stacked to (t, c)."""
    _check_params(r, l_m)
    values = np.empty((t, c), dtype=bool)
    for i in range(c):
        values[:, i] = generate_mask_column(t, l_m, r, rng)
    return MaskMatrix(values=values, r=r, l_m=l_m)


def apply_mask(x, mask):
    """Zero masked positions of a (t, c) array; kept entries pass through."""
    values = mask.values if isinstance(mask, MaskMatrix) else np.asarray(mask, dtype=bool)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != values.shape:
        raise DimensionError(f"signal shape {x.shape} does not match mask shape {values.shape}")
    return x * values


def masked_run_lengths(column):
    """Lengths of maximal masked runs in a kept/masked boolean sequence."""
    masked = ~np.asarray(column, dtype=bool)
    padded = np.concatenate([[False], masked, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return edges[1::2] - edges[0::2]
