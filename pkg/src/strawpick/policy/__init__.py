from strawpick.policy.model import (
    ChunkPolicy,
    LossBreakdown,
    PolicyConfig,
    PredictionBundle,
    ShapeMismatch,
    UnknownVariant,
    compute_loss,
    count_parameters,
    kl_divergence,
)
from strawpick.policy.train import (
    Checkpoint,
    NonFiniteLoss,
    load_checkpoint,
    measure_inference_ms,
    train,
)

__all__ = [
    "Checkpoint",
    "ChunkPolicy",
    "LossBreakdown",
    "NonFiniteLoss",
    "PolicyConfig",
    "PredictionBundle",
    "ShapeMismatch",
    "UnknownVariant",
    "compute_loss",
    "count_parameters",
    "kl_divergence",
    "load_checkpoint",
    "measure_inference_ms",
    "train",
]
