"""Reservoir-ensemble + transformer forecasting for chaotic series."""

from .chaos import D2Estimate, delay_embedding, estimate_d2, shannon_entropy
from .datasets import (
    SeriesSplit,
    gen_lorenz,
    gen_mackey_glass,
    gen_sine,
    load_csv,
    save_csv,
    split_series,
)
from .embedding import (
    EmbeddingConfig,
    RevinStats,
    revin_apply,
    revin_denormalize,
    revin_normalize,
)
from .errors import (
    ConfigError,
    NotFittedError,
    SingularMatrixError,
    TrainingDivergedError,
)
from .estimator import ReservoirTransformerRegressor, RevinNormalizer
from .experiments import ExperimentSpec, resolve_spec, run_forecast
from .group import GroupConfig, GroupReservoir, init_group
from .linalg import (
    Rng,
    rescale_spectral_radius,
    ridge_solve,
    sample_uniform,
    softmax,
    spectral_radius,
)
from .model import (
    ForecastModel,
    ModelConfig,
    TrainConfig,
    gradient_check,
    load_checkpoint,
    predict_rolling,
    save_checkpoint,
    train,
)
from .reservoir import (
    LinearReadout,
    Reservoir,
    ReservoirConfig,
    apply_readout,
    fit_linear_readout,
    run_reservoir,
)
from .stats import mae, mse, t_test_one_sample

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "D2Estimate",
    "EmbeddingConfig",
    "ExperimentSpec",
    "ForecastModel",
    "GroupConfig",
    "GroupReservoir",
    "LinearReadout",
    "ModelConfig",
    "NotFittedError",
    "Reservoir",
    "ReservoirConfig",
    "ReservoirTransformerRegressor",
    "RevinNormalizer",
    "RevinStats",
    "Rng",
    "SeriesSplit",
    "SingularMatrixError",
    "TrainConfig",
    "TrainingDivergedError",
    "__version__",
    "apply_readout",
    "delay_embedding",
    "estimate_d2",
    "fit_linear_readout",
    "gen_lorenz",
    "gen_mackey_glass",
    "gen_sine",
    "gradient_check",
    "init_group",
    "load_checkpoint",
    "load_csv",
    "mae",
    "mse",
    "predict_rolling",
    "rescale_spectral_radius",
    "resolve_spec",
    "revin_apply",
    "revin_denormalize",
    "revin_normalize",
    "ridge_solve",
    "run_forecast",
    "run_reservoir",
    "sample_uniform",
    "save_checkpoint",
    "save_csv",
    "shannon_entropy",
    "softmax",
    "spectral_radius",
    "split_series",
    "t_test_one_sample",
    "train",
]
