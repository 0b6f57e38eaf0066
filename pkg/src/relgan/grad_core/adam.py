from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ContractError, NumericError
from .tensor import Tensor


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    eps: float = 1e-8


@dataclass(frozen=True)
class AdamState:
    """First/second moments per parameter (same order as the param list)."""

    hyper: AdamHyper
    m: tuple = field(default=())
    v: tuple = field(default=())
    t: int = 0

    @classmethod
    def fresh(cls, params, hyper=None):
        hyper = hyper or AdamHyper()
        zeros = tuple(np.zeros(p.shape) for p in params)
        return cls(hyper, zeros, tuple(z.copy() for z in zeros), 0)


def adam_step(state: AdamState, params, grads):
    """One bias-corrected Adam update.

    ``grads`` is either a list aligned with ``params`` or a mapping keyed by
    the parameter tensors; parameters without a gradient are treated as
    having zero gradient. Returns ``(new_params, new_state)``; inputs are not
    mutated.
    """
    if len(state.m) != len(params):
        raise ContractError(
            f"adam_step: state tracks {len(state.m)} tensors, got {len(params)} params"
        )
    if isinstance(grads, dict):
        grads = [grads.get(p) for p in params]
    h = state.hyper
    t = state.t + 1
    c1 = 1.0 - h.beta1**t
    c2 = 1.0 - h.beta2**t

    new_params, new_m, new_v = [], [], []
    for i, (p, g, m, v) in enumerate(zip(params, grads, state.m, state.v)):
        if p.shape != m.shape:
            raise ContractError(f"adam_step: param {i} shape {p.shape} != moment {m.shape}")
        g = np.zeros(p.shape) if g is None else (g.data if isinstance(g, Tensor) else np.asarray(g))
        if g.shape != p.shape:
            raise ContractError(f"adam_step: grad {i} shape {g.shape} != param {p.shape}")
        if not np.all(np.isfinite(g)):
            label = p.name or f"#{i}"
            raise NumericError(f"adam_step: non-finite gradient for parameter {label}")
        m = h.beta1 * m + (1.0 - h.beta1) * g
        v = h.beta2 * v + (1.0 - h.beta2) * (g * g)
        update = h.lr * (m / c1) / (np.sqrt(v / c2) + h.eps)
        new_params.append(Tensor(p.data - update, requires_grad=True, name=p.name))
        new_m.append(m)
        new_v.append(v)
    return new_params, replace(state, m=tuple(new_m), v=tuple(new_v), t=t)
