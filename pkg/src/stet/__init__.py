"""Short-term enhanced transformer toolkit for multi-channel sEMG windows.

The public surface follows the scikit-learn estimator protocol: channel
normalizers are transformers, the classifier/regressor expose fit/predict,
and everything composes in pipelines. The numeric core (float64 tensors
with tape-based reverse-mode differentiation) lives in ``stet.tensor``.
"""

from .estimators import (
    MinMaxChannelScaler,
    MuLawCompander,
    STETClassifier,
    STETRegressor,
    check_window_array,
)
from .model import ModelConfig, ParameterStore
from .signal import NoiseSpec, Recording, SignalSequence
from .tensor import RngState, Tensor

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "RngState",
    "ModelConfig",
    "ParameterStore",
    "Recording",
    "SignalSequence",
    "NoiseSpec",
    "STETClassifier",
    "STETRegressor",
    "MinMaxChannelScaler",
    "MuLawCompander",
    "check_window_array",
    "__version__",
]
