"""Hand pose estimation at desk scale: a kinematic hand prior refined by
residual graph convolution, trained in three stages with bone-constrained
losses and a spectrally normalized Wasserstein critic, all on synthetic
renderings."""

from .autodiff import Tape, Tensor
from .config import AblationVariant, TrainConfig
from .graph import SkeletonGraph, build_hand_graph
from .losses import LossWeights, PckCurve, metric_mean_error, metric_pck
from .skeleton import SkeletonTemplate, default_template
from .synthetic import Dataset, HandParams, Sample, sample_synthetic
from .training import (
    EvalReport,
    evaluate,
    run_ablation,
    stage1_pretrain,
    stage2_train_generator,
    stage3_adversarial,
)

__version__ = "0.1.0"

__all__ = [
    "Tape",
    "Tensor",
    "AblationVariant",
    "TrainConfig",
    "SkeletonGraph",
    "build_hand_graph",
    "LossWeights",
    "PckCurve",
    "metric_mean_error",
    "metric_pck",
    "SkeletonTemplate",
    "default_template",
    "Dataset",
    "HandParams",
    "Sample",
    "sample_synthetic",
    "EvalReport",
    "evaluate",
    "run_ablation",
    "stage1_pretrain",
    "stage2_train_generator",
    "stage3_adversarial",
    "__version__",
]
