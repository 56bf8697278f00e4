"""Reverse-mode differentiation core: tensors, ops, Adam and finite-difference checks."""

from src.autodiff.gradcheck import GradCheckReport, away_from_zero, grad_check
from src.autodiff.ops import (
    add,
    conv2d,
    conv_transpose2d,
    dense,
    frame_mean,
    instance_norm2d,
    l1_distance,
    leaky_relu,
    relu,
    reshape,
    scale,
    square_error,
    stop_gradient,
    total,
)
from src.autodiff.optim import AdamState, adam_step
from src.autodiff.tensor import Gradients, Tensor, backward, constant, parameter

__all__ = [
    "AdamState",
    "GradCheckReport",
    "Gradients",
    "Tensor",
    "adam_step",
    "add",
    "away_from_zero",
    "backward",
    "constant",
    "conv2d",
    "conv_transpose2d",
    "dense",
    "frame_mean",
    "grad_check",
    "instance_norm2d",
    "l1_distance",
    "leaky_relu",
    "parameter",
    "relu",
    "reshape",
    "scale",
    "square_error",
    "stop_gradient",
    "total",
]
