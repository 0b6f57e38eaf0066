"""Dense f64 tensors with reverse-mode autodiff and Adam."""

from .adam import AdamHyper, AdamState, adam_step
from .autodiff import GradCheckResult, backward, grad, grad_check, grad_check_detailed
from .ops import (
    PRIMITIVES,
    add,
    add_bias,
    apply_primitive,
    concat_feature,
    div,
    expand,
    leaky_relu,
    matmul,
    mean_all,
    mean_rows,
    mul,
    relu,
    row_l2_norm,
    scalar_mul,
    sigmoid,
    slice_cols,
    softplus,
    sub,
    sum_all,
    sum_to,
    tanh,
    transpose,
)
from .tensor import Tape, Tensor, active_tape, as_tensor, no_record

__all__ = [name for name in dir() if not name.startswith("_")]
