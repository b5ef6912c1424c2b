"""Dense-matrix network engine: forward/backward, SGD, gradient oracle."""
from src.domain.tensornet.gradcheck import GradCheckReport, finite_diff_check
from src.domain.tensornet.losses import (
    PROB_FLOOR,
    batch_cross_entropy,
    cross_entropy,
    softmax_rows,
    softmax_rows_backward,
)
from src.domain.tensornet.network import (
    DenseLayer,
    DenseMatrix,
    ForwardCache,
    MlpNetwork,
    as_dense,
    backward,
    ensure_finite,
    forward,
    glorot_uniform,
    predict,
)
from src.domain.tensornet.optim import SgdState, minibatches, sgd_step, step_decay
from src.domain.tensornet.random import rng_stream
from src.domain.tensornet.training import (
    OptimizerSpec,
    TrainingHistory,
    run_sgd,
    train_softmax_classifier,
)

__all__ = [
    "PROB_FLOOR",
    "DenseLayer",
    "DenseMatrix",
    "ForwardCache",
    "GradCheckReport",
    "MlpNetwork",
    "OptimizerSpec",
    "SgdState",
    "TrainingHistory",
    "as_dense",
    "backward",
    "batch_cross_entropy",
    "cross_entropy",
    "ensure_finite",
    "finite_diff_check",
    "forward",
    "glorot_uniform",
    "minibatches",
    "predict",
    "rng_stream",
    "run_sgd",
    "sgd_step",
    "softmax_rows",
    "softmax_rows_backward",
    "step_decay",
    "train_softmax_classifier",
]
