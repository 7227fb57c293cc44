"""Deterministic mixup augmentation: masks, policies, objectives and a small training harness."""

from .core import (
    MixRatio,
    MixResult,
    PairIndex,
    beta_draws,
    corrected_lambda,
    derive_seed,
    make_pairs,
    mix_labels_linear,
    sample_lambda,
    substream,
)
from .data import Dataset, SynthSpec, read_cifar, read_image_dir, synth_dataset
from .errors import (
    ConfigError,
    CorruptionError,
    EmptyInputError,
    FormatError,
    MixforgeError,
    ParameterError,
    ShapeError,
    TrainingDiverged,
)
from .harness import RunReport, TinyModel, TrainConfig, bench, train
from .masks import apply_mask, fourier_mask, grid_mask, rect_mask, smooth_mask
from .objective import cross_entropy, ece, mixup_cross_entropy, top1_accuracy
from .policies import POLICIES, PolicyConfig, apply_policy
from .puzzlemix import BlockGrid, TransportPlan, optimize_block_mask, puzzle_mix, transport_blocks
from .saliency import saliency_map, sobel_saliency, spectral_residual_saliency

__version__ = "0.1.0"

__all__ = [
    "apply_mask",
    "apply_policy",
    "bench",
    "beta_draws",
    "BlockGrid",
    "ConfigError",
    "corrected_lambda",
    "CorruptionError",
    "cross_entropy",
    "Dataset",
    "derive_seed",
    "ece",
    "EmptyInputError",
    "FormatError",
    "fourier_mask",
    "grid_mask",
    "make_pairs",
    "mix_labels_linear",
    "MixforgeError",
    "MixRatio",
    "MixResult",
    "mixup_cross_entropy",
    "optimize_block_mask",
    "PairIndex",
    "ParameterError",
    "POLICIES",
    "PolicyConfig",
    "puzzle_mix",
    "read_cifar",
    "read_image_dir",
    "rect_mask",
    "RunReport",
    "saliency_map",
    "sample_lambda",
    "ShapeError",
    "smooth_mask",
    "sobel_saliency",
    "spectral_residual_saliency",
    "substream",
    "synth_dataset",
    "SynthSpec",
    "TinyModel",
    "top1_accuracy",
    "train",
    "TrainConfig",
    "TrainingDiverged",
    "transport_blocks",
    "TransportPlan",
]
