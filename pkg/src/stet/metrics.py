"""Classification/regression metrics and the noise-robustness drop rate."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (
    DegenerateSeriesError,
    DimensionError,
    InsufficientDataError,
    MappingError,
)

__all__ = [
    "accuracy",
    "std_across_runs",
    "pcc",
    "rmse",
    "nrmse",
    "avg_curvature",
    "drop_rate",
    "MetricsReport",
    "REPORT_SCHEMA_VERSION",
]

REPORT_SCHEMA_VERSION = 1


def accuracy(preds, labels, category_map=None):
    """Fraction correct overall and per category.

    ``category_map`` assigns each class id to a category name; categories
    with no samples are omitted rather than reported as zero.
    """
    preds = np.asarray(preds, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if preds.shape != labels.shape:
        raise DimensionError(f"predictions {preds.shape} vs labels {labels.shape}")
    correct = preds == labels
    out = {"overall": float(correct.mean())}
    if category_map is not None:
        missing = sorted(set(labels.tolist()) - set(category_map))
        if missing:
            raise MappingError(f"class id(s) {missing} have no category assignment")
        for category in dict.fromkeys(category_map.values()):
            member = np.isin(labels, [c for c, cat in category_map.items() if cat == category])
            if member.any():
                out[category] = float(correct[member].mean())
    return out


def std_across_runs(per_run_values):
    values = np.asarray(per_run_values, dtype=np.float64)
    if values.size < 2:
        raise InsufficientDataError(f"need >= 2 runs for a spread, got {values.size}")
    return float(values.std(ddof=1))


def _as_joint_matrix(y):
    y = np.asarray(y, dtype=np.float64)
    return y[:, None] if y.ndim == 1 else y


def pcc(y_true, y_pred):
    """Pearson correlation per joint, averaged over joints."""
    yt, yp = _as_joint_matrix(y_true), _as_joint_matrix(y_pred)
    if yt.shape != yp.shape:
        raise DimensionError(f"trajectories {yt.shape} vs {yp.shape}")
    if len(yt) < 2:
        raise InsufficientDataError("need >= 2 points for a correlation")
    coeffs = []
    for j in range(yt.shape[1]):
        a, b = yt[:, j], yp[:, j]
        if a.std() == 0 or b.std() == 0:
            raise DegenerateSeriesError(f"joint {j} has zero variance")
        coeffs.append(np.corrcoef(a, b)[0, 1])
    return float(np.mean(coeffs))


def rmse(y_true, y_pred):
    yt, yp = _as_joint_matrix(y_true), _as_joint_matrix(y_pred)
    return float(np.sqrt(((yt - yp) ** 2).mean()))


def nrmse(y_true, y_pred):
    """RMSE divided by the true trajectory's range, per joint, averaged."""
    yt, yp = _as_joint_matrix(y_true), _as_joint_matrix(y_pred)
    if yt.shape != yp.shape:
        raise DimensionError(f"trajectories {yt.shape} vs {yp.shape}")
    values = []
    for j in range(yt.shape[1]):
        span = yt[:, j].max() - yt[:, j].min()
        if span == 0:
            raise DegenerateSeriesError(f"joint {j} trajectory is flat")
        values.append(np.sqrt(((yt[:, j] - yp[:, j]) ** 2).mean()) / span)
    return float(np.mean(values))


def avg_curvature(y, step=1.0):
    """Mean |y''| / (1 + y'^2)^(3/2) over interior points and joints.

    Derivatives are central finite differences at ``step`` spacing (default:
    unit index spacing, so values are comparable only across series with the
    same sampling).
    """
    y = _as_joint_matrix(y)
    if len(y) < 3:
        raise InsufficientDataError(f"curvature needs >= 3 points, got {len(y)}")
    d1 = (y[2:] - y[:-2]) / (2.0 * step)
    d2 = (y[2:] - 2.0 * y[1:-1] + y[:-2]) / (step * step)
    kappa = np.abs(d2) / (1.0 + d1 * d1) ** 1.5
    return float(kappa.mean())


def drop_rate(acc_raw, acc_noise):
    """(ACC_raw - ACC_noise) / ACC_raw."""
    if acc_raw == 0:
        raise ZeroDivisionError("drop rate undefined for zero clean accuracy")
    return (acc_raw - acc_noise) / acc_raw


@dataclass
class MetricsReport:
    """Serializable summary of one evaluation run."""

    task: str
    overall_accuracy: float | None = None
    category_accuracy: dict = field(default_factory=dict)
    accuracy_std: float | None = None
    std_axis: str | None = None
    pcc: float | None = None
    rmse: float | None = None
    nrmse: float | None = None
    kappa: float | None = None
    kappa_reference: float | None = None
    noise_table: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    schema_version: int = REPORT_SCHEMA_VERSION

    def validate(self):
        for name, value in [("overall_accuracy", self.overall_accuracy)] + list(
            self.category_accuracy.items()
        ):
            if value is not None and not 0.0 <= value <= 1.0:
                raise DegenerateSeriesError(f"accuracy {name}={value} outside [0, 1]")
        if self.pcc is not None and not -1.0 <= self.pcc <= 1.0 + 1e-12:
            raise DegenerateSeriesError(f"pcc {self.pcc} outside [-1, 1]")
        for row in self.noise_table:
            if row["drop_rate"] > 1.0 + 1e-12:
                raise DegenerateSeriesError(f"drop rate {row['drop_rate']} exceeds 1")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, payload):
        payload = dict(payload)
        version = payload.get("schema_version", None)
        if version != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema version {version}")
        return cls(**payload)

    def save(self, path):
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save_noise_csv(self, path):
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["mode", "intensity", "accuracy", "drop_rate"])
            for row in self.noise_table:
                writer.writerow([row["mode"], row["intensity"], row["accuracy"], row["drop_rate"]])
        return path
