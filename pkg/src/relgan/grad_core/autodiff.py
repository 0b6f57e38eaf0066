"""Reverse-mode sweep over a tape, plus a finite-difference gradient checker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, NumericError
from .tensor import Tensor, Tape, no_record


def backward(tape: Tape, loss: Tensor, wrt=None, create_graph=False):
    """Gradients of a scalar ``loss`` w.r.t. parameter leaves.

    Returns ``{tensor: gradient}`` for every leaf with ``requires_grad`` that
    the loss depends on, or for exactly the tensors in ``wrt`` (zeros when
    unreachable). With ``create_graph`` the adjoint computation is itself
    recorded on ``tape``, so the returned gradients can be differentiated.
    """
    if loss.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {list(loss.shape)}")

    grads = {}
    holders = {}
    if loss.node is not None:
        if loss.node.index >= len(tape.nodes) or tape.nodes[loss.node.index] is not loss.node:
            raise ContractError("backward: loss was not recorded on this tape")
        seed = Tensor._wrap(np.ones(loss.shape))
        grads[id(loss)] = seed
        holders[id(loss)] = loss
        nodes = tape.nodes[: loss.node.index + 1]
        ctx = tape.resume() if create_graph else no_record()
        with ctx:
            for node in reversed(nodes):
                g = grads.pop(id(node.output), None)
                if g is None:
                    continue
                in_grads = node.vjp(g, node.output)
                for inp, ig in zip(node.inputs, in_grads):
                    if ig is None or not inp.requires_grad:
                        continue
                    key = id(inp)
                    prev = grads.get(key)
                    if prev is None:
                        grads[key] = ig
                        holders[key] = inp
                    else:
                        grads[key] = prev + ig
    elif loss.requires_grad:
        holders[id(loss)] = loss
        grads[id(loss)] = Tensor._wrap(np.ones(loss.shape))

    if wrt is not None:
        return {
            t: grads.get(id(t), Tensor._wrap(np.zeros(t.shape)))
            for t in wrt
        }
    return {
        holders[k]: g
        for k, g in grads.items()
        if holders[k].node is None and holders[k].requires_grad
    }


def grad(fn, params, create_graph=False):
    """Convenience: record ``fn(*params)`` on a fresh tape and differentiate it."""
    with Tape() as tape:
        loss = fn(*params)
    g = backward(tape, loss, wrt=params, create_graph=create_graph)
    return loss, [g[p] for p in params]


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    masked: int
    per_param: list = field(default_factory=list)


def grad_check_detailed(f, params, eps=1e-5, kink_tol=1e-2):
    """Compare reverse-mode gradients with central differences.

    A coordinate is masked as sitting on a kink when its forward and
    backward one-sided slopes disagree by more than ``kink_tol`` (relative).
    """
    if eps <= 0:
        raise ContractError("grad_check: eps must be positive")
    params = [p if p.requires_grad else Tensor(p.data, requires_grad=True) for p in params]

    with Tape() as tape:
        out = f(*params)
    if out.size != 1:
        raise ContractError("grad_check: f must return a scalar")
    f0 = out.item()
    if not np.isfinite(f0):
        raise NumericError("grad_check: f is not finite at the base point")
    analytic = backward(tape, out, wrt=params)

    def evaluate(i, flat):
        trial = list(params)
        trial[i] = Tensor._wrap(flat.reshape(params[i].shape).copy())
        with no_record():
            v = f(*trial).item()
        if not np.isfinite(v):
            raise NumericError(f"grad_check: f not finite after perturbing param {i}")
        return v

    worst = 0.0
    checked = masked = 0
    per_param = []
    for i, p in enumerate(params):
        base = p.data.reshape(-1).copy()
        ana = analytic[p].data.reshape(-1)
        p_worst = 0.0
        for j in range(base.size):
            plus = base.copy()
            plus[j] += eps
            minus = base.copy()
            minus[j] -= eps
            fp = evaluate(i, plus)
            fm = evaluate(i, minus)
            central = (fp - fm) / (2 * eps)
            fwd = (fp - f0) / eps
            bwd = (f0 - fm) / eps
            if abs(fwd - bwd) > kink_tol * max(1.0, abs(central)):
                masked += 1
                continue
            rel = abs(ana[j] - central) / max(1.0, abs(central))
            p_worst = max(p_worst, rel)
            checked += 1
        per_param.append(p_worst)
        worst = max(worst, p_worst)
    return GradCheckResult(worst, checked, masked, per_param)


def grad_check(f, params, eps=1e-5):
    """Max over coordinates of |analytic - central| / max(1, |central|)."""
    return grad_check_detailed(f, params, eps).max_rel_error
