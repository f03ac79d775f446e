"""Minimal reverse-mode automatic differentiation on numpy arrays."""

from . import ops
from .checkpoint import CheckpointFormatError, read_records, write_records
from .gradcheck import gradcheck, numeric_gradient, relative_error
from .optim import Adam, Parameter, adam_step
from .tensor import (
    ConfigurationError,
    ContractError,
    DimensionError,
    Tape,
    Tensor,
    backward,
    current_tape,
    is_grad_enabled,
    no_grad,
)

__all__ = [
    "Adam",
    "CheckpointFormatError",
    "ConfigurationError",
    "ContractError",
    "DimensionError",
    "Parameter",
    "Tape",
    "Tensor",
    "adam_step",
    "backward",
    "current_tape",
    "gradcheck",
    "is_grad_enabled",
    "no_grad",
    "numeric_gradient",
    "ops",
    "read_records",
    "relative_error",
    "write_records",
]
