"""Adaptive-moment optimizer with decoupled weight decay.

Decay is applied multiplicatively to the parameter before the adaptive
update, so it never enters the moment estimates. (A rectified-variance
variant is not implemented; at desk scale the warmup behaviour it targets
is immaterial. Reports record the optimizer actually used.)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, NumericError

__all__ = ["OptimizerConfig", "AdamW", "OPTIMIZER_TAG"]

OPTIMIZER_TAG = "adam-decoupled-wd"


@dataclass
class OptimizerConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigurationError("learning rate and weight decay must be >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigurationError("betas must lie in [0, 1)")


class AdamW:
    """First/second-moment EMAs with bias correction over named tensors."""

    def __init__(self, params, cfg=None):
        self.params = dict(params.items())
        self.cfg = cfg or OptimizerConfig()
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        cfg = self.cfg
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - cfg.beta1**t
        bias2 = 1.0 - cfg.beta2**t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient for parameter {name}")
            if cfg.weight_decay:
                p.data *= 1.0 - cfg.lr * cfg.weight_decay
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * (g * g)
            p.data -= cfg.lr * (m / bias1) / (np.sqrt(v / bias2) + cfg.eps)

    def state(self):
        out = {"step": np.array([self.step_count], dtype=np.float64)}
        for name in self.params:
            out[f"m.{name}"] = self.m[name].copy()
            out[f"v.{name}"] = self.v[name].copy()
        return out

    def load_state(self, state):
        self.step_count = int(state["step"][0])
        for name in self.params:
            self.m[name] = np.asarray(state[f"m.{name}"], dtype=np.float64).copy()
            self.v[name] = np.asarray(state[f"v.{name}"], dtype=np.float64).copy()
        return self
