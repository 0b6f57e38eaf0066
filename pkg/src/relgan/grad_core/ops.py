"""Primitive ops with forward values and tensor-valued adjoints.

Each adjoint is itself written in primitives, so a backward pass run with
``create_graph=True`` records a differentiable graph (needed for gradient
penalties). Shapes are checked strictly; there is no implicit broadcasting,
use ``expand`` and ``sum_to`` instead.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DimensionError
from .tensor import Tensor, record


def _const(arr):
    return Tensor._wrap(np.asarray(arr, dtype=np.float64))


def _require_2d(kind, t):
    if t.data.ndim != 2:
        raise DimensionError(f"{kind}: expected a 2-D tensor, got shape {list(t.shape)}")


def _same_shape(kind, a, b):
    if a.shape != b.shape:
        raise DimensionError(
            f"{kind}: shape mismatch {list(a.shape)} vs {list(b.shape)}"
        )


def matmul(a, b):
    _require_2d("matmul", a)
    _require_2d("matmul", b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions differ, {list(a.shape)} @ {list(b.shape)}"
        )

    def vjp(g, out):
        ga = matmul(g, transpose(b)) if a.requires_grad else None
        gb = matmul(transpose(a), g) if b.requires_grad else None
        return ga, gb

    return record("matmul", a.data @ b.data, (a, b), vjp)


def transpose(a):
    _require_2d("transpose", a)
    return record("transpose", a.data.T, (a,), lambda g, out: (transpose(g),))


def add(a, b):
    _same_shape("add", a, b)
    return record("add", a.data + b.data, (a, b), lambda g, out: (g, g))


def sub(a, b):
    _same_shape("sub", a, b)
    return record("sub", a.data - b.data, (a, b), lambda g, out: (g, scalar_mul(g, -1.0)))


def mul(a, b):
    """Elementwise product."""
    _same_shape("mul", a, b)

    def vjp(g, out):
        return (
            mul(g, b) if a.requires_grad else None,
            mul(g, a) if b.requires_grad else None,
        )

    return record("mul", a.data * b.data, (a, b), vjp)


def div(a, b):
    """Elementwise quotient; the caller keeps ``b`` away from zero."""
    _same_shape("div", a, b)

    def vjp(g, out):
        ga = div(g, b) if a.requires_grad else None
        gb = scalar_mul(div(mul(g, out), b), -1.0) if b.requires_grad else None
        return ga, gb

    return record("div", a.data / b.data, (a, b), vjp)


def scalar_mul(a, c):
    c = float(c)
    return record("scalar_mul", a.data * c, (a,), lambda g, out: (scalar_mul(g, c),))


def add_bias(a, b):
    """Row-wise bias: ``a`` is [n, m], ``b`` is [m]."""
    _require_2d("add_bias", a)
    if b.data.ndim != 1 or b.shape[0] != a.shape[1]:
        raise DimensionError(
            f"add_bias: bias shape {list(b.shape)} does not match input {list(a.shape)}"
        )

    def vjp(g, out):
        return g, (sum_to(g, b.shape) if b.requires_grad else None)

    return record("add_bias", a.data + b.data, (a, b), vjp)


def leaky_relu(a, alpha=0.2):
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"leaky_relu: alpha must lie in (0, 1), got {alpha}")
    pos = a.data > 0.0

    def vjp(g, out):
        return (mul(g, _const(np.where(pos, 1.0, alpha))),)

    return record("leaky_relu", np.where(pos, a.data, alpha * a.data), (a,), vjp)


def relu(a):
    """The hinge [x]+ with subgradient 0 at the kink."""
    mask = (a.data > 0.0).astype(np.float64)

    def vjp(g, out):
        return (mul(g, _const(mask)),)

    return record("relu", a.data * mask, (a,), vjp)


def tanh(a):
    def vjp(g, out):
        one = _const(np.ones(out.shape))
        return (mul(g, sub(one, mul(out, out))),)

    return record("tanh", np.tanh(a.data), (a,), vjp)


def sigmoid(a):
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    val = np.where(x >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))

    def vjp(g, out):
        one = _const(np.ones(out.shape))
        return (mul(g, mul(out, sub(one, out))),)

    return record("sigmoid", val, (a,), vjp)


def softplus(a):
    """log(1 + e^x), evaluated stably."""
    x = a.data
    val = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def vjp(g, out):
        return (mul(g, sigmoid(a)),)

    return record("softplus", val, (a,), vjp)


def concat_feature(a, b):
    """[B, d1] ++ [B, d2] -> [B, d1 + d2] along the feature axis."""
    _require_2d("concat_feature", a)
    _require_2d("concat_feature", b)
    if a.shape[0] != b.shape[0]:
        raise DimensionError(
            f"concat_feature: batch sizes differ, {list(a.shape)} vs {list(b.shape)}"
        )
    d1 = a.shape[1]
    d2 = b.shape[1]

    def vjp(g, out):
        return (
            slice_cols(g, 0, d1) if a.requires_grad else None,
            slice_cols(g, d1, d1 + d2) if b.requires_grad else None,
        )

    return record("concat_feature", np.concatenate([a.data, b.data], axis=1), (a, b), vjp)


def slice_cols(a, start, stop):
    _require_2d("slice_cols", a)
    n, k = a.shape
    if not 0 <= start <= stop <= k:
        raise DimensionError(f"slice_cols: [{start}:{stop}] out of range for {list(a.shape)}")

    def vjp(g, out):
        parts = []
        if start > 0:
            parts.append(_const(np.zeros((n, start))))
        parts.append(g)
        if stop < k:
            parts.append(_const(np.zeros((n, k - stop))))
        acc = parts[0]
        for p in parts[1:]:
            acc = concat_feature(acc, p)
        return (acc,)

    return record("slice_cols", a.data[:, start:stop].copy(), (a,), vjp)


def mean_all(a):
    n = a.size

    def vjp(g, out):
        return (scalar_mul(expand(g, a.shape), 1.0 / n),)

    return record("mean_all", np.array([a.data.mean()]), (a,), vjp)


def sum_all(a):
    return record("sum", np.array([a.data.sum()]), (a,), lambda g, out: (expand(g, a.shape),))


def mean_rows(a):
    """Average over the batch axis: [B, k] -> [1, k]."""
    _require_2d("mean_rows", a)
    rows = a.shape[0]

    def vjp(g, out):
        return (scalar_mul(expand(g, a.shape), 1.0 / rows),)

    return record("mean_rows", a.data.mean(axis=0, keepdims=True), (a,), vjp)


def row_l2_norm(a):
    """Euclidean norm of each row: [B, d] -> [B, 1]. Zero rows get zero gradient."""
    _require_2d("row_l2_norm", a)
    val = np.sqrt(np.sum(a.data * a.data, axis=1, keepdims=True))

    def vjp(g, out):
        # zero rows: pad denominator to 1, the product with a zero row stays 0
        safe = add(out, _const((out.data == 0.0).astype(np.float64)))
        return (mul(expand(div(g, safe), a.shape), a),)

    return record("row_l2_norm", val, (a,), vjp)


def expand(a, shape):
    """Broadcast size-1 axes (numpy rules) up to ``shape``."""
    shape = tuple(shape)
    try:
        val = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise DimensionError(f"expand: cannot broadcast {list(a.shape)} to {list(shape)}") from None
    src = a.shape
    return record("expand", val, (a,), lambda g, out: (sum_to(g, src),))


def sum_to(a, shape):
    """Adjoint of ``expand``: sum ``a`` down to a broadcast-compatible ``shape``."""
    shape = tuple(shape)
    src = a.shape
    lead = len(src) - len(shape)
    if lead < 0:
        raise DimensionError(f"sum_to: cannot reduce {list(src)} to {list(shape)}")
    axes = list(range(lead))
    for i, n in enumerate(shape):
        if n == 1 and src[lead + i] != 1:
            axes.append(lead + i)
        elif n != src[lead + i]:
            raise DimensionError(f"sum_to: cannot reduce {list(src)} to {list(shape)}")
    val = a.data.sum(axis=tuple(axes)).reshape(shape) if axes else a.data.reshape(shape).copy()
    return record("sum_to", val, (a,), lambda g, out: (expand(g, src),))


PRIMITIVES = {
    "matmul": matmul,
    "transpose": transpose,
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "scalar_mul": scalar_mul,
    "add_bias": add_bias,
    "leaky_relu": leaky_relu,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "concat_feature": concat_feature,
    "slice_cols": slice_cols,
    "mean_all": mean_all,
    "mean_rows": mean_rows,
    "sum": sum_all,
    "row_l2_norm": row_l2_norm,
    "expand": expand,
    "sum_to": sum_to,
}


def apply_primitive(kind, *inputs, **params):
    """Dispatch by name, e.g. ``apply_primitive("leaky_relu", x, alpha=0.2)``."""
    try:
        fn = PRIMITIVES[kind]
    except KeyError:
        raise ConfigError(f"unknown primitive {kind!r}") from None
    return fn(*inputs, **params)
