"""Deterministic float64 numeric kernel: dense nets, Adam, reverse-mode grads."""

from .autodiff import (
    DomainError,
    ShapeError,
    UsageError,
    Var,
    as_var,
    backward,
    cosine_distance_var,
    finite_diff_check,
    grad,
    leaf,
    log_softmax,
    rowwise_cosine_distance,
    softmax_cross_entropy,
    value_of,
)
from .nn import (
    Mlp2Params,
    RnnParams,
    cosine_distance,
    mlp2_forward,
    mlp2_init,
    named_params,
    rnn_init,
    rnn_step,
    with_vars,
)
from .optim import AdamState, TrainingError, adam_step

__all__ = [
    "AdamState",
    "DomainError",
    "Mlp2Params",
    "RnnParams",
    "ShapeError",
    "TrainingError",
    "UsageError",
    "Var",
    "adam_step",
    "as_var",
    "backward",
    "cosine_distance",
    "cosine_distance_var",
    "finite_diff_check",
    "grad",
    "leaf",
    "log_softmax",
    "mlp2_forward",
    "mlp2_init",
    "named_params",
    "rnn_init",
    "rnn_step",
    "rowwise_cosine_distance",
    "softmax_cross_entropy",
    "value_of",
    "with_vars",
]
