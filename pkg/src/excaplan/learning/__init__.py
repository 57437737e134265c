from .data import ExcavationSample
from .evaluation import (
    Metrics,
    classification_metrics,
    evaluate_classifier,
    evaluate_regressor,
    regression_metrics,
)
from .nets import (
    HEAD_CLASSIFIER,
    HEAD_REGRESSOR,
    VARIANT_TRAJ,
    VARIANT_VOXEL,
    Model,
    NetworkSpec,
    assemble_input,
    forward,
    init_model,
    load_model,
    loss_and_grad,
    normalize_trajectory,
    denormalize_trajectory,
    save_model,
)
from .training import (
    Adam,
    TrainConfig,
    TrainResult,
    TrainingArrays,
    epoch_stream,
    gradient_check,
    predict_arrays,
    train,
)

__all__ = [
    "ExcavationSample",
    "Metrics",
    "classification_metrics",
    "evaluate_classifier",
    "evaluate_regressor",
    "regression_metrics",
    "HEAD_CLASSIFIER",
    "HEAD_REGRESSOR",
    "VARIANT_TRAJ",
    "VARIANT_VOXEL",
    "Model",
    "NetworkSpec",
    "assemble_input",
    "forward",
    "init_model",
    "load_model",
    "loss_and_grad",
    "normalize_trajectory",
    "denormalize_trajectory",
    "save_model",
    "Adam",
    "TrainConfig",
    "TrainResult",
    "TrainingArrays",
    "epoch_stream",
    "gradient_check",
    "predict_arrays",
    "train",
]
