from .masking import DegenerateMaskWarning, build_mask, masked_softmax, masked_softmax_batch, softmax
from .network import (
    ENCODER_VARIANTS,
    ClassifierNetwork,
    EncodedBatch,
    EncoderConfig,
    build_network,
    compute_gradients,
    forward,
    loss,
    predict_hierarchical,
)
from .training import Adam, EpochRecord, TrainConfig, TrainingLog, train_network, validation_rank_metric

__all__ = [
    "ENCODER_VARIANTS",
    "Adam",
    "ClassifierNetwork",
    "DegenerateMaskWarning",
    "EncodedBatch",
    "EncoderConfig",
    "EpochRecord",
    "TrainConfig",
    "TrainingLog",
    "build_mask",
    "build_network",
    "compute_gradients",
    "forward",
    "loss",
    "masked_softmax",
    "masked_softmax_batch",
    "predict_hierarchical",
    "softmax",
    "train_network",
    "validation_rank_metric",
]
