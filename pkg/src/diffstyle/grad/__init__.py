"""Tape-based reverse-mode autodiff over numpy arrays."""

from .engine import (
    EXP_MAX_ARG,
    Node,
    abs_,
    add,
    as_node,
    backward,
    branch_trace,
    checkpoint,
    clamp,
    concat,
    constant,
    conv1d,
    current_dtype,
    detach,
    div,
    exp,
    finite,
    gaussian_separable,
    gaussian_taps,
    grad_enabled,
    grad_of,
    grid_sample_bilinear,
    leaf,
    line_filter,
    maximum,
    mean_all,
    minimum,
    mul,
    narrow,
    no_grad,
    pow_,
    precision,
    record_branch,
    reshape,
    select,
    sign,
    sqrt,
    stack_first,
    sub,
    sum_all,
    sum_channels,
    sum_last,
    tanh,
    unsqueeze_last,
    zero_grads,
)
from .checking import CheckReport, grad_check, grad_check_multi

__all__ = [
    "Node", "leaf", "as_node", "constant", "detach", "grad_of",
    "add", "sub", "mul", "div", "pow_", "exp", "tanh", "sqrt", "abs_",
    "sign", "clamp", "minimum", "maximum", "select",
    "reshape", "unsqueeze_last", "narrow", "concat", "stack_first",
    "sum_all", "mean_all", "sum_last", "sum_channels",
    "conv1d", "gaussian_taps", "gaussian_separable", "grid_sample_bilinear",
    "line_filter",
    "backward", "zero_grads", "finite", "checkpoint",
    "precision", "no_grad", "grad_enabled", "current_dtype",
    "branch_trace", "record_branch", "EXP_MAX_ARG",
    "CheckReport", "grad_check", "grad_check_multi",
]
