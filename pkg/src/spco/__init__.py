"""Spatial-concept learning with cross-environment knowledge transfer."""

from .core import (
    Assignments,
    ConfigurationError,
    DegenerateDistributionError,
    Dictionary,
    EnvParams,
    EvaluationRegion,
    GenerationError,
    GlobalParams,
    Hyperparameters,
    MetricError,
    NoPredictionError,
    Observation,
    ParameterError,
    Pose,
    PruningError,
    SpcoError,
    TrainedModel,
    VocabularyError,
)
from .data import (
    LoadConfig,
    SynthSpec,
    SyntheticTruth,
    generate_synthetic,
    generate_test_set,
    load_corpora,
    load_corpus,
)
from .evaluate import (
    ExperimentResult,
    name_accuracy,
    position_accuracy,
    run_adaptive_experiment,
    run_transfer_experiment,
)
from .learn import TrainConfig, fit, fit_traced
from .model_io import load_model, save_model
from .predict import predict_name, predict_positions, predict_region

__version__ = "1.0.0"

__all__ = [
    "Assignments",
    "ConfigurationError",
    "DegenerateDistributionError",
    "Dictionary",
    "EnvParams",
    "EvaluationRegion",
    "ExperimentResult",
    "GenerationError",
    "GlobalParams",
    "Hyperparameters",
    "LoadConfig",
    "MetricError",
    "NoPredictionError",
    "Observation",
    "ParameterError",
    "Pose",
    "PruningError",
    "SpcoError",
    "SynthSpec",
    "SyntheticTruth",
    "TrainConfig",
    "TrainedModel",
    "VocabularyError",
    "fit",
    "fit_traced",
    "generate_synthetic",
    "generate_test_set",
    "load_corpora",
    "load_corpus",
    "load_model",
    "name_accuracy",
    "position_accuracy",
    "predict_name",
    "predict_positions",
    "predict_region",
    "run_adaptive_experiment",
    "run_transfer_experiment",
    "save_model",
]
