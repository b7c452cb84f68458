"""triview: multi-view contrastive learning for time-series domain adaptation.

Three complementary views of a series (raw temporal, backward-difference
derivative, FFT amplitude spectrum) feed three transformer encoders; a
cross-view attention block fuses them, per-view heads pool embeddings, and a
linear classifier reads their concatenation. Training is two-stage: InfoNCE
contrastive pre-training on an unlabeled source, then fine-tuning on a
labeled target with a weighted contrastive + cross-entropy objective.

The numerical core is a small reverse-mode autodiff engine over numpy arrays
whose backward rules are certified against central finite differences
(``triview.verification``).
"""

from .dataio import (
    ClassSpec,
    DataError,
    SyntheticShiftSpec,
    TimeSeriesDataset,
    TimeSeriesSample,
    drop_observations,
    generate_synthetic,
    load_dataset,
    normalize,
    resample_uniform,
    save_dataset,
    xor_preset,
)
from .model import Model, ModelConfig, load_checkpoint, load_for_transfer, save_checkpoint
from .numerics import Tensor, gradient_check, no_grad
from .objectives import AugmentationPolicy, LossReport, augment, cross_entropy, info_nce, total_loss
from .training import (
    MetricsReport,
    TrainConfig,
    TrainingError,
    compute_metrics,
    evaluate,
    finetune,
    prepare_dataset,
    pretrain,
    run_ablation_grid,
)
from .views import ViewSet, derivative_view, dft_oracle, extract_views, fft, frequency_view

__version__ = "0.1.0"

__all__ = [
    "AugmentationPolicy",
    "ClassSpec",
    "DataError",
    "LossReport",
    "MetricsReport",
    "Model",
    "ModelConfig",
    "SyntheticShiftSpec",
    "Tensor",
    "TimeSeriesDataset",
    "TimeSeriesSample",
    "TrainConfig",
    "TrainingError",
    "ViewSet",
    "augment",
    "compute_metrics",
    "cross_entropy",
    "derivative_view",
    "dft_oracle",
    "drop_observations",
    "evaluate",
    "extract_views",
    "fft",
    "finetune",
    "frequency_view",
    "generate_synthetic",
    "gradient_check",
    "info_nce",
    "load_checkpoint",
    "load_dataset",
    "load_for_transfer",
    "no_grad",
    "normalize",
    "prepare_dataset",
    "pretrain",
    "resample_uniform",
    "run_ablation_grid",
    "save_checkpoint",
    "save_dataset",
    "total_loss",
    "xor_preset",
]
