"""Residual embedding network, contextual classifier, and exact gradients."""

from . import autograd
from .autograd import Tensor
from .checkpoint import load_model, save_model
from .network import (
    Batch,
    Model,
    ModelConfig,
    VARIANTS,
    backward,
    build_model,
    forward,
    grad_check,
    stats_pool,
)

__all__ = [
    "autograd",
    "Tensor",
    "Batch",
    "Model",
    "ModelConfig",
    "VARIANTS",
    "backward",
    "build_model",
    "forward",
    "grad_check",
    "stats_pool",
    "save_model",
    "load_model",
]
