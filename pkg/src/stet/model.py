"""The STET network.

A transformer encoder with learned absolute position embeddings feeds two
decoders run in parallel: full self-attention over the whole window (global
context) and stride-1 sliding-window self-attention (local context, same
projection weights at every query position). Their outputs are concatenated
on the hidden axis, pooled over time by a learnable length-t vector, and fed
to a task head. A per-step linear head reconstructs masked inputs during
pretraining.
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .exceptions import (
    CheckpointMismatchError,
    ConfigurationError,
    DimensionError,
    NumericError,
    ParseError,
)
from .tensor import RngState, Tensor

__all__ = [
    "ModelConfig",
    "ParameterStore",
    "encode",
    "long_term_decode",
    "short_term_decode",
    "attention_block",
    "fuse_and_pool",
    "pool_streams",
    "forward_classify",
    "forward_regress",
    "forward_pretrain",
    "save_checkpoint",
    "load_checkpoint",
    "ENCODER_PREFIXES",
]

STREAMS = ("fused", "long", "short")

# parameter groups carried over from pretraining into fine-tuning
ENCODER_PREFIXES = ("input_proj.", "pos_embedding", "encoder.")


@dataclass
class ModelConfig:
    sensors: int
    steps: int
    hidden: int = 64
    encoder_layers: int = 2
    heads: int = 4
    long_layers: int = 2
    short_layers: int = 2
    short_windows: tuple = (41, 21)
    n_classes: int | None = None
    n_joints: int | None = None
    dropout: float = 0.2
    ffn_multiplier: int = 4
    per_head_scale: bool = False
    streams: str = "fused"

    def __post_init__(self):
        self.short_windows = tuple(int(w) for w in self.short_windows)
        self.validate()

    def validate(self):
        if self.sensors < 1 or self.steps < 1:
            raise ConfigurationError("sensors and steps must be positive")
        if self.hidden % self.heads != 0:
            raise ConfigurationError(
                f"hidden width {self.hidden} not divisible by {self.heads} heads"
            )
        if len(self.short_windows) != self.short_layers:
            raise ConfigurationError(
                f"{self.short_layers} short layers need {self.short_layers} window sizes, "
                f"got {self.short_windows}"
            )
        for w in self.short_windows:
            if w < 1 or w % 2 == 0:
                raise ConfigurationError(f"short windows must be odd and positive, got {w}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.streams not in STREAMS:
            raise ConfigurationError(f"streams must be one of {STREAMS}, got {self.streams!r}")
        return self

    def effective_windows(self):
        """Configured windows, clamped to the largest odd size <= steps."""
        limit = self.steps if self.steps % 2 == 1 else self.steps - 1
        clamped = tuple(min(w, limit) for w in self.short_windows)
        if clamped != self.short_windows:
            warnings.warn(
                f"short windows {self.short_windows} clamped to {clamped} for {self.steps} steps",
                stacklevel=3,
            )
        return clamped

    @property
    def n_streams(self):
        return 2 if self.streams == "fused" else 1

    @property
    def pooled_width(self):
        return self.hidden * self.n_streams

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, payload):
        return cls(**payload)


def _layer_param_shapes(prefix, cfg):
    h, f = cfg.hidden, cfg.hidden * cfg.ffn_multiplier
    return {
        f"{prefix}.ln1.gamma": (h,),
        f"{prefix}.ln1.beta": (h,),
        f"{prefix}.attn.wq": (h, h),
        f"{prefix}.attn.wk": (h, h),
        f"{prefix}.attn.wv": (h, h),
        f"{prefix}.attn.wo": (h, h),
        f"{prefix}.ln2.gamma": (h,),
        f"{prefix}.ln2.beta": (h,),
        f"{prefix}.ffn.w1": (h, f),
        f"{prefix}.ffn.b1": (f,),
        f"{prefix}.ffn.w2": (f, h),
        f"{prefix}.ffn.b2": (h,),
    }


def _head_param_shapes(prefix, width, out):
    return {
        f"{prefix}.w1": (width, width),
        f"{prefix}.b1": (width,),
        f"{prefix}.w2": (width, out),
        f"{prefix}.b2": (out,),
    }


class ParameterStore:
    """All learnable weights, addressed by dotted names.

    Weight matrices initialize uniform +-1/sqrt(fan_in), biases zero, the
    position table N(0, 0.02^2), layer-norm gains one, and the temporal
    pooling vector 1/t (mean pooling at start).
    """

    def __init__(self, config, rng=None):
        self.config = config
        self._params = {}
        shapes = self._all_shapes(config)
        for name, shape in shapes.items():
            self._params[name] = Tensor(
                self._initial_value(name, shape, rng), requires_grad=True
            )

    @staticmethod
    def _all_shapes(cfg):
        shapes = {
            "input_proj.weight": (cfg.sensors, cfg.hidden),
            "input_proj.bias": (cfg.hidden,),
            "pos_embedding": (cfg.steps, cfg.hidden),
        }
        for i in range(cfg.encoder_layers):
            shapes.update(_layer_param_shapes(f"encoder.{i}", cfg))
        if cfg.streams in ("fused", "long"):
            for i in range(cfg.long_layers):
                shapes.update(_layer_param_shapes(f"long.{i}", cfg))
        if cfg.streams in ("fused", "short"):
            for i in range(cfg.short_layers):
                shapes.update(_layer_param_shapes(f"short.{i}", cfg))
        shapes["fusion.u"] = (cfg.steps,)
        if cfg.n_classes is not None:
            shapes.update(_head_param_shapes("classifier", cfg.pooled_width, cfg.n_classes))
        if cfg.n_joints is not None:
            shapes.update(_head_param_shapes("regressor", cfg.pooled_width, cfg.n_joints))
        shapes["recon.weight"] = (cfg.hidden, cfg.sensors)
        shapes["recon.bias"] = (cfg.sensors,)
        return shapes

    def _initial_value(self, name, shape, rng):
        if rng is None:
            return np.zeros(shape)
        if name == "pos_embedding":
            return rng.derive("init", name).normal(0.0, 0.02, size=shape)
        if name == "fusion.u":
            return np.full(shape, 1.0 / shape[0])
        if name.endswith(".gamma"):
            return np.ones(shape)
        if len(shape) == 2:
            bound = 1.0 / math.sqrt(shape[0])
            return rng.derive("init", name).uniform(-bound, bound, size=shape)
        return np.zeros(shape)

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self):
        for p in self._params.values():
            p.zero_grad()

    def check_finite(self):
        for name, p in self._params.items():
            if not np.isfinite(p.data).all():
                raise NumericError(f"parameter {name} contains non-finite values")

    def state(self):
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state(self, state):
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise CheckpointMismatchError(
                f"parameter names differ: missing {sorted(missing)}, unexpected {sorted(extra)}"
            )
        for name, value in state.items():
            value = np.asarray(value, dtype=np.float64)
            if value.shape != self._params[name].shape:
                raise CheckpointMismatchError(
                    f"parameter {name}: stored shape {value.shape} vs expected "
                    f"{self._params[name].shape}"
                )
            self._params[name].data = value.copy()
        return self

    def transfer_encoder_from(self, other):
        """Copy pretrained backbone weights (projection, positions, encoder)."""
        for name, p in self._params.items():
            if name.startswith(ENCODER_PREFIXES):
                src = other[name]
                if src.shape != p.shape:
                    raise CheckpointMismatchError(
                        f"encoder parameter {name}: {src.shape} vs {p.shape}"
                    )
                p.data = src.data.copy()
        return self


def _split_heads(z, cfg):
    b, t, h = z.shape
    z = T.reshape(z, (b, t, cfg.heads, h // cfg.heads))
    return T.transpose(z, (0, 2, 1, 3))


def _merge_heads(z, cfg):
    b, d, t, dk = z.shape
    z = T.transpose(z, (0, 2, 1, 3))
    return T.reshape(z, (b, t, d * dk))


def attention_block(x, params, prefix, cfg, training=False, rng=None, window=None):
    """One pre-norm transformer block; ``window=None`` means full attention.

    The same projection weights serve every query position, so windowed and
    full variants share one parameter layout.
    """
    p = params
    scale = 1.0 / math.sqrt(cfg.hidden // cfg.heads if cfg.per_head_scale else cfg.hidden)

    y = T.layer_norm(x, p[f"{prefix}.ln1.gamma"], p[f"{prefix}.ln1.beta"])
    q = T.matmul(y, p[f"{prefix}.attn.wq"])
    k = T.matmul(y, p[f"{prefix}.attn.wk"])
    v = T.matmul(y, p[f"{prefix}.attn.wv"])
    b, t, h = y.shape
    d, dk = cfg.heads, cfg.hidden // cfg.heads

    if window is None:
        qh, kh, vh = (_split_heads(z, cfg) for z in (q, k, v))
        scores = T.mul(T.matmul(qh, T.swapaxes(kh, -1, -2)), scale)
        attn = T.softmax_lastdim(scores)
        attn = T.dropout(attn, cfg.dropout, rng, training)
        ctx = _merge_heads(T.matmul(attn, vh), cfg)
    else:
        k_unf, valid = T.unfold_time(k, window)
        v_unf, _ = T.unfold_time(v, window)
        q4 = T.reshape(q, (b, t, d, dk))
        k5 = T.reshape(k_unf, (b, t, window, d, dk))
        v5 = T.reshape(v_unf, (b, t, window, d, dk))
        scores = T.mul(T.pair_einsum("btdk,btwdk->btdw", q4, k5), scale)
        pad_bias = np.where(valid, 0.0, -np.inf).reshape(t, 1, window)
        scores = T.add(scores, Tensor(pad_bias))
        attn = T.softmax_lastdim(scores)
        attn = T.dropout(attn, cfg.dropout, rng, training)
        ctx = T.reshape(T.pair_einsum("btdw,btwdk->btdk", attn, v5), (b, t, h))

    out = T.matmul(ctx, p[f"{prefix}.attn.wo"])
    x = T.add(x, out)

    z = T.layer_norm(x, p[f"{prefix}.ln2.gamma"], p[f"{prefix}.ln2.beta"])
    f = T.relu(T.linear(z, p[f"{prefix}.ffn.w1"], p[f"{prefix}.ffn.b1"]))
    f = T.linear(f, p[f"{prefix}.ffn.w2"], p[f"{prefix}.ffn.b2"])
    f = T.dropout(f, cfg.dropout, rng, training)
    return T.add(x, f)


def _ensure_batched(x, cfg):
    if isinstance(x, Tensor):
        data = x.data
    else:
        data = np.asarray(x, dtype=np.float64)
    squeeze = data.ndim == 2
    if squeeze:
        data = data[None]
    if data.ndim != 3 or data.shape[1] != cfg.steps or data.shape[2] != cfg.sensors:
        raise DimensionError(
            f"expected input (batch, {cfg.steps}, {cfg.sensors}), got {data.shape}"
        )
    return Tensor(data), squeeze


def encode(x, params, cfg, training=False, rng=None):
    """Signal embedding + position table + encoder stack: (B, t, c) -> (B, t, h)."""
    xt, _ = _ensure_batched(x, cfg)
    emb = T.linear(xt, params["input_proj.weight"], params["input_proj.bias"])
    emb = T.add(emb, params["pos_embedding"])
    for i in range(cfg.encoder_layers):
        emb = attention_block(emb, params, f"encoder.{i}", cfg, training, rng, window=None)
    return emb


def long_term_decode(h_enc, params, cfg, training=False, rng=None):
    out = h_enc
    for i in range(cfg.long_layers):
        out = attention_block(out, params, f"long.{i}", cfg, training, rng, window=None)
    return out


def short_term_decode(h_enc, params, cfg, training=False, rng=None):
    out = h_enc
    for i, w in enumerate(cfg.effective_windows()):
        out = attention_block(out, params, f"short.{i}", cfg, training, rng, window=w)
    return out


def pool_streams(streams, params):
    """Concatenate decoder outputs on the hidden axis and pool over time."""
    cat = streams[0] if len(streams) == 1 else T.concat(streams, axis=-1)
    t = cat.shape[-2]
    u = T.reshape(params["fusion.u"], (1, t))
    pooled = T.matmul(u, cat)
    return T.reshape(pooled, (cat.shape[0], cat.shape[-1]))


def fuse_and_pool(h_long, h_short, params):
    """Temporal pooling of [H_long : H_short]: (B, t, h) x 2 -> (B, 2h)."""
    return pool_streams([h_long, h_short], params)


def _decode_streams(h_enc, params, cfg, training, rng):
    streams = []
    if cfg.streams in ("fused", "long"):
        streams.append(long_term_decode(h_enc, params, cfg, training, rng))
    if cfg.streams in ("fused", "short"):
        streams.append(short_term_decode(h_enc, params, cfg, training, rng))
    return streams


def _head(z, params, prefix):
    hidden = T.relu(T.linear(z, params[f"{prefix}.w1"], params[f"{prefix}.b1"]))
    return T.linear(hidden, params[f"{prefix}.w2"], params[f"{prefix}.b2"])


def forward_classify(x, params, cfg, training=False, rng=None, return_probs=True):
    """Per-class independent probabilities (B, C); predicted class = argmax."""
    if cfg.n_classes is None:
        raise ConfigurationError("forward_classify requires n_classes in the config")
    h_enc = encode(x, params, cfg, training, rng)
    pooled = pool_streams(_decode_streams(h_enc, params, cfg, training, rng), params)
    logits = _head(pooled, params, "classifier")
    return T.sigmoid(logits) if return_probs else logits


def forward_regress(x, params, cfg, training=False, rng=None):
    """Joint-angle estimates (B, n_joints); same trunk, linear output."""
    if cfg.n_joints is None:
        raise ConfigurationError("forward_regress requires n_joints in the config")
    h_enc = encode(x, params, cfg, training, rng)
    pooled = pool_streams(_decode_streams(h_enc, params, cfg, training, rng), params)
    return _head(pooled, params, "regressor")


def forward_pretrain(x_masked, params, cfg, training=True, rng=None):
    """Reconstruction (B, t, c) of a masked input via the per-step linear head."""
    h_enc = encode(x_masked, params, cfg, training, rng)
    return T.linear(h_enc, params["recon.weight"], params["recon.bias"])


# --- checkpoint container ---------------------------------------------------

_CKPT_MAGIC = b"STETCKP\x00"
_CKPT_VERSION = 1


def save_checkpoint(path, params, extras=None):
    """Binary container: magic, version, config JSON block, named f64 records."""
    records = dict(params.items())
    extras = extras or {}
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        config_blob = json.dumps(params.config.to_dict(), sort_keys=True).encode()
        fh.write(struct.pack("<II", _CKPT_VERSION, len(config_blob)))
        fh.write(config_blob)
        fh.write(struct.pack("<I", len(records) + len(extras)))

        def write_record(name, array):
            blob = name.encode()
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<I", array.ndim))
            fh.write(struct.pack(f"<{array.ndim}Q", *array.shape))
            fh.write(np.ascontiguousarray(array, dtype="<f8").tobytes())

        for name, p in records.items():
            write_record(name, p.data)
        for name, value in extras.items():
            write_record(f"extra.{name}", np.asarray(value, dtype=np.float64))
    return path


def _diff_configs(stored, expected):
    lines = []
    for key in sorted(set(stored) | set(expected)):
        a, b = stored.get(key), expected.get(key)
        a = tuple(a) if isinstance(a, list) else a
        b = tuple(b) if isinstance(b, list) else b
        if a != b:
            lines.append(f"{key}: stored {a!r} vs expected {b!r}")
    return lines


def load_checkpoint(path, expected_config=None):
    """Load (ParameterStore, ModelConfig, extras); reject config mismatches."""
    with open(path, "rb") as fh:
        if fh.read(len(_CKPT_MAGIC)) != _CKPT_MAGIC:
            raise ParseError(f"{path}: not a model checkpoint (bad magic)")
        version, config_len = struct.unpack("<II", fh.read(8))
        if version != _CKPT_VERSION:
            raise ParseError(f"unsupported checkpoint version {version}")
        stored_dict = json.loads(fh.read(config_len).decode())
        if expected_config is not None:
            diff = _diff_configs(stored_dict, expected_config.to_dict())
            if diff:
                raise CheckpointMismatchError(
                    "checkpoint config differs: " + "; ".join(diff)
                )
        config = ModelConfig.from_dict(stored_dict)
        (n_records,) = struct.unpack("<I", fh.read(4))
        state, extras = {}, {}
        for _ in range(n_records):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode()
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy()
            if name.startswith("extra."):
                extras[name[len("extra."):]] = data
            else:
                state[name] = data
    params = ParameterStore(config, rng=None)
    params.load_state(state)
    return params, config, extras
