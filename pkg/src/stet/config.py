"""Run configuration: a versioned YAML schema with strict validation.

Unknown keys are rejected (typos must not silently fall back to defaults)
and every value can be overridden from the command line with dotted
``section.key=value`` assignments.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path

import yaml

from .exceptions import ConfigurationError, ParseError
from .model import ModelConfig
from .optim import OptimizerConfig

__all__ = [
    "CONFIG_SCHEMA_VERSION",
    "RunConfig",
    "load_config",
    "apply_overrides",
    "build_model_config",
]

CONFIG_SCHEMA_VERSION = 1


@dataclass
class SyntheticSpec:
    kind: str = "gestures"  # gestures | angles
    n_classes: int = 8
    n_channels: int = 8
    steps: int = 64
    samples_per_class: int = 200
    twin_pair: bool = True
    sample_rate_hz: float = 1000.0
    # angles-specific
    n_recordings: int = 12
    n_joints: int = 3
    recording_samples: int = 4000


@dataclass
class DataSection:
    source: str = "synthetic"  # synthetic | file
    path: str | None = None
    format: str | None = None  # csv | raw-f64 (inferred from suffix when None)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    window_ms: float = 200.0
    overlap_ms: float = 10.0
    # "overlap": stride = window - overlap (literal reading of an overlap);
    # "step": stride = overlap_ms itself (the alternate reading)
    stride_mode: str = "overlap"
    split: tuple = (5, 2)
    category_map: dict | None = None


@dataclass
class NormalizationSection:
    chain: tuple = ("minmax", "mulaw")
    mu: float = 255.0


@dataclass
class ModelSection:
    hidden: int = 64
    encoder_layers: int = 2
    heads: int = 4
    long_layers: int = 2
    short_layers: int = 2
    short_windows: tuple = (41, 21)
    dropout: float = 0.2
    ffn_multiplier: int = 4
    per_head_scale: bool = False
    streams: str = "fused"  # fused | long | short


@dataclass
class MaskSection:
    ratio: float = 0.15
    mean_length: float = 3.0


@dataclass
class LossSection:
    kind: str = "asymmetric"  # asymmetric | cross-entropy
    gamma_plus: float = 1.0
    gamma_minus: float = 0.0
    margin: float = 0.05


@dataclass
class TrainingSection:
    batch_size: int = 16
    pretrain_epochs: int = 20
    finetune_epochs: int = 50
    eval_batch_size: int = 64


@dataclass
class NoiseSection:
    sigmas: tuple = (0.05, 0.1, 0.2, 0.4)
    drop_probs: tuple = (0.1, 0.2, 0.4)


@dataclass
class RunConfig:
    config_version: int = CONFIG_SCHEMA_VERSION
    task: str = "classify"  # classify | regress
    seed: int = 0
    out_dir: str = "runs/default"
    data: DataSection = field(default_factory=DataSection)
    normalization: NormalizationSection = field(default_factory=NormalizationSection)
    model: ModelSection = field(default_factory=ModelSection)
    mask: MaskSection = field(default_factory=MaskSection)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    loss: LossSection = field(default_factory=LossSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    noise: NoiseSection = field(default_factory=NoiseSection)

    def validate(self):
        if self.config_version != CONFIG_SCHEMA_VERSION:
            raise ConfigurationError(
                f"config_version {self.config_version} unsupported "
                f"(expected {CONFIG_SCHEMA_VERSION})"
            )
        if self.task not in ("classify", "regress"):
            raise ConfigurationError(f"task must be classify or regress, got {self.task!r}")
        if self.data.source not in ("synthetic", "file"):
            raise ConfigurationError(f"data.source must be synthetic or file, got {self.data.source!r}")
        if self.data.source == "file" and not self.data.path:
            raise ConfigurationError("data.source=file requires data.path")
        if self.data.stride_mode not in ("overlap", "step"):
            raise ConfigurationError(
                f"data.stride_mode must be overlap or step, got {self.data.stride_mode!r}"
            )
        if self.data.synthetic.kind not in ("gestures", "angles"):
            raise ConfigurationError(
                f"data.synthetic.kind must be gestures or angles, got {self.data.synthetic.kind!r}"
            )
        if len(self.data.split) != 2 or any(int(s) <= 0 for s in self.data.split):
            raise ConfigurationError(f"data.split must be two positive integers, got {self.data.split}")
        if self.loss.kind not in ("asymmetric", "cross-entropy"):
            raise ConfigurationError(
                f"loss.kind must be asymmetric or cross-entropy, got {self.loss.kind!r}"
            )
        if self.training.batch_size < 1:
            raise ConfigurationError("training.batch_size must be >= 1")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)


def _build_dataclass(cls, payload, path):
    if payload is None:
        payload = {}
    if not isinstance(payload, dict):
        raise ConfigurationError(f"{path or 'config'}: expected a mapping, got {type(payload).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(payload) - set(known))
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigurationError(f"unknown config key(s): {', '.join(where + k for k in unknown)}")
    kwargs = {}
    for name, f in known.items():
        if name not in payload:
            continue
        value = payload[name]
        target = f.type if isinstance(f.type, type) else None
        default = f.default if f.default is not dataclasses.MISSING else None
        child = f.default_factory() if f.default_factory is not dataclasses.MISSING else default
        if is_dataclass(child) or (target is not None and is_dataclass(target)):
            cls_child = type(child) if child is not None else target
            kwargs[name] = _build_dataclass(cls_child, value, f"{path}.{name}" if path else name)
        elif isinstance(child, tuple) and isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{path or 'config'}: {exc}") from None


def apply_overrides(payload, overrides):
    """Apply ``section.key=value`` assignments; values parse as YAML scalars."""
    for item in overrides or []:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        dotted, raw = item.split("=", 1)
        keys = [k for k in dotted.strip().split(".") if k]
        if not keys:
            raise ConfigurationError(f"override {item!r} has an empty key path")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            value = raw
        if isinstance(value, str):
            # YAML 1.1 misses bare scientific notation like 5e-4
            try:
                value = float(value)
            except ValueError:
                pass
        node = payload
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override {dotted}: {key} is not a section")
        node[keys[-1]] = value
    return payload


def load_config(path=None, overrides=None):
    """Load and validate a RunConfig; ``path=None`` starts from defaults."""
    payload = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            payload = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ParseError(f"{path}: invalid YAML ({exc})") from None
        if not isinstance(payload, dict):
            raise ParseError(f"{path}: config root must be a mapping")
    payload = apply_overrides(payload, overrides)
    return _build_dataclass(RunConfig, payload, "").validate()


def build_model_config(cfg, sensors, steps, n_classes=None, n_joints=None):
    """Combine the architecture section with data-derived dimensions."""
    m = cfg.model
    return ModelConfig(
        sensors=sensors,
        steps=steps,
        hidden=m.hidden,
        encoder_layers=m.encoder_layers,
        heads=m.heads,
        long_layers=m.long_layers,
        short_layers=m.short_layers,
        short_windows=tuple(m.short_windows),
        n_classes=n_classes,
        n_joints=n_joints,
        dropout=m.dropout,
        ffn_multiplier=m.ffn_multiplier,
        per_head_scale=m.per_head_scale,
        streams=m.streams,
    )
