"""Finite-difference checks for every primitive and the composed networks.

Used by the ``gradcheck`` command and by the test suite.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .autodiff import grad_check_detailed
from .tensor import Tensor

TOLERANCE = 1e-4


def _p(rng, *shape, scale=1.0):
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True)


def _weights(rng, b, k):
    # fixed random projection so every output coordinate contributes
    return Tensor(rng.standard_normal((b, k)))


def primitive_cases(rng):
    """(name, f, params) triples; f reduces each primitive's output to a scalar."""
    w33 = _weights(rng, 4, 3)
    w41 = _weights(rng, 4, 1)
    w_cat = _weights(rng, 4, 5)
    w_row = _weights(rng, 1, 3)
    pos = Tensor(rng.uniform(0.5, 2.0, size=(4, 3)), requires_grad=True)

    def red(t, w):
        return ops.sum_all(ops.mul(t, w))

    return [
        ("matmul", lambda a, b: red(ops.matmul(a, b), w33), [_p(rng, 4, 2), _p(rng, 2, 3)]),
        ("transpose", lambda a: red(ops.transpose(a), w33), [_p(rng, 3, 4)]),
        ("add", lambda a, b: red(ops.add(a, b), w33), [_p(rng, 4, 3), _p(rng, 4, 3)]),
        ("sub", lambda a, b: red(ops.sub(a, b), w33), [_p(rng, 4, 3), _p(rng, 4, 3)]),
        ("mul", lambda a, b: red(ops.mul(a, b), w33), [_p(rng, 4, 3), _p(rng, 4, 3)]),
        ("div", lambda a, b: red(ops.div(a, b), w33), [_p(rng, 4, 3), pos]),
        ("scalar_mul", lambda a: red(ops.scalar_mul(a, -1.7), w33), [_p(rng, 4, 3)]),
        ("add_bias", lambda a, b: red(ops.add_bias(a, b), w33), [_p(rng, 4, 3), _p(rng, 3)]),
        ("leaky_relu", lambda a: red(ops.leaky_relu(a, 0.2), w33), [_p(rng, 4, 3)]),
        ("relu", lambda a: red(ops.relu(a), w33), [_p(rng, 4, 3)]),
        ("tanh", lambda a: red(ops.tanh(a), w33), [_p(rng, 4, 3)]),
        ("sigmoid", lambda a: red(ops.sigmoid(a), w33), [_p(rng, 4, 3, scale=3.0)]),
        ("softplus", lambda a: red(ops.softplus(a), w33), [_p(rng, 4, 3, scale=3.0)]),
        ("concat_feature", lambda a, b: red(ops.concat_feature(a, b), w_cat),
         [_p(rng, 4, 2), _p(rng, 4, 3)]),
        ("slice_cols", lambda a: red(ops.slice_cols(a, 1, 4), w33), [_p(rng, 4, 5)]),
        ("mean_all", lambda a: ops.mean_all(ops.mul(a, a)), [_p(rng, 4, 3)]),
        ("sum", lambda a: ops.sum_all(ops.tanh(a)), [_p(rng, 4, 3)]),
        ("mean_rows", lambda a: red(ops.mean_rows(a), w_row), [_p(rng, 4, 3)]),
        ("row_l2_norm", lambda a: red(ops.row_l2_norm(a), w41), [_p(rng, 4, 3)]),
        ("expand", lambda a: red(ops.expand(a, (4, 3)), w33), [_p(rng, 1, 3)]),
        ("sum_to", lambda a: red(ops.sum_to(a, (1, 3)), w_row), [_p(rng, 4, 3)]),
    ]


def composite_cases(rng):
    """Networks and losses assembled from primitives."""
    from ..losses import TripletBatch, gradient_penalty, loss_d_triplet, loss_g_relation
    from ..relnet import Mlp, MlpSpec, RelationDiscriminator, mlp_init

    x = Tensor(rng.standard_normal((5, 3)))

    def mlp3(w0, b0, w1, b1, w2, b2):
        h = ops.tanh(ops.add_bias(ops.matmul(x, w0), b0))
        h = ops.leaky_relu(ops.add_bias(ops.matmul(h, w1), b1), 0.2)
        return ops.mean_all(ops.add_bias(ops.matmul(h, w2), b2))

    mlp_params = [_p(rng, 3, 6), _p(rng, 6), _p(rng, 6, 4), _p(rng, 4), _p(rng, 4, 1), _p(rng, 1)]

    em = mlp_init(MlpSpec((2, 6, 5), "leaky_relu", "leaky_relu"), rng)
    rm = mlp_init(MlpSpec((10, 4, 1)), rng)
    n_em = len(em.params)
    a = Tensor(rng.standard_normal((6, 2)))
    b = Tensor(rng.standard_normal((6, 2)))

    def rel_disc(params):
        return RelationDiscriminator(Mlp(em.spec, params[:n_em]), Mlp(rm.spec, params[n_em:]))

    def pair_score(*params):
        return ops.sum_all(rel_disc(params)(a, b))

    batch = TripletBatch(*(Tensor(rng.standard_normal((6, 2))) for _ in range(4)))

    def triplet(*params):
        return loss_d_triplet(rel_disc(params), batch)

    gen = mlp_init(MlpSpec((3, 5, 2)), rng)
    z = Tensor(rng.standard_normal((6, 3)))
    frozen = rel_disc([p.detach() for p in em.params + rm.params])

    def gen_loss(*gparams):
        yf1 = Mlp(gen.spec, list(gparams))(z)
        return loss_g_relation(frozen, TripletBatch(batch.xr1, batch.xr2, yf1, batch.yf2))

    critic = mlp_init(MlpSpec((2, 5, 1), "tanh"), rng)
    x_hat = rng.standard_normal((4, 2))

    def penalty(*cparams):
        return gradient_penalty(Mlp(critic.spec, list(cparams)), x_hat)

    pr = [Tensor(p.data, requires_grad=True) for p in em.params + rm.params]
    return [
        ("mlp_3layer", mlp3, mlp_params),
        ("relation_pair_score", pair_score, pr),
        ("relation_triplet_loss_d", triplet, [Tensor(p.data, requires_grad=True) for p in pr]),
        ("relation_loss_g_through_generator", gen_loss,
         [Tensor(p.data, requires_grad=True) for p in gen.params]),
        ("wgan_gp_penalty_second_order", penalty,
         [Tensor(p.data, requires_grad=True) for p in critic.params]),
    ]


def run_suite(seed=0, eps=1e-5):
    """Returns a list of dict rows: name, max_rel_error, checked, masked, passed."""
    rng = np.random.default_rng(seed)
    rows = []
    for name, f, params in primitive_cases(rng) + composite_cases(rng):
        res = grad_check_detailed(f, params, eps)
        rows.append({
            "name": name,
            "max_rel_error": res.max_rel_error,
            "checked": res.checked,
            "masked": res.masked,
            "passed": bool(res.max_rel_error < TOLERANCE and res.checked > 0),
        })
    return rows
