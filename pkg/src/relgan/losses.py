"""Relation triplet losses and the single-sample baseline GAN losses.

The relation losses expect a discriminator exposing ``embed(x)`` and
``relate(e1, e2)`` (see ``relnet.RelationDiscriminator``), so every batch is
embedded once even though it appears in several pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .grad_core import (
    Tape,
    Tensor,
    active_tape,
    add,
    backward,
    expand,
    mean_all,
    mul,
    relu,
    row_l2_norm,
    scalar_mul,
    softplus,
    sub,
)

RELATION_TAGS = ("relation_triplet", "relation_triplet_variant", "siamese")
BASELINE_TAGS = ("vanilla_ns", "lsgan", "wgan", "wgan_gp", "relativistic_hinge")
LOSS_TAGS = RELATION_TAGS + BASELINE_TAGS


@dataclass(frozen=True)
class LossKind:
    tag: str
    gp_lambda: float = 10.0
    siamese_margin: float = 1.0

    def __post_init__(self):
        if self.tag not in LOSS_TAGS:
            raise ConfigError(f"unknown loss tag {self.tag!r}; expected one of {', '.join(LOSS_TAGS)}")
        if self.gp_lambda < 0:
            raise ConfigError("gp_lambda must be >= 0")

    @property
    def is_relation(self):
        return self.tag in RELATION_TAGS


@dataclass(frozen=True)
class TripletBatch:
    """xr1, xr2: independent real batches; yf1: current fakes; yf2: buffered fakes."""

    xr1: Tensor
    xr2: Tensor
    yf1: Tensor
    yf2: Tensor

    def __post_init__(self):
        shapes = {t.shape for t in (self.xr1, self.xr2, self.yf1, self.yf2)}
        if len(shapes) != 1:
            raise DimensionError(f"TripletBatch: batches disagree in shape: {sorted(shapes)}")
        if self.yf2.requires_grad:
            raise ConfigError("TripletBatch: yf2 must be detached")


def margin_delta(a, b):
    """Row-wise Euclidean distance [B, 1]; always a constant (no gradient)."""
    a = a.data if isinstance(a, Tensor) else np.asarray(a, dtype=np.float64)
    b = b.data if isinstance(b, Tensor) else np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"margin_delta: shape mismatch {list(a.shape)} vs {list(b.shape)}")
    diff = a - b
    return Tensor._wrap(np.sqrt(np.sum(diff * diff, axis=1, keepdims=True)))


def _pair_scores(d, batch):
    e_r1 = d.embed(batch.xr1)
    e_r2 = d.embed(batch.xr2)
    e_f1 = d.embed(batch.yf1)
    e_f2 = d.embed(batch.yf2)
    real_real = d.relate(e_r1, e_r2)
    real_fake = d.relate(e_r1, e_f1)
    fake_fake = d.relate(e_f1, e_f2)
    return real_real, real_fake, fake_fake


def triplet_hinge_args(d, batch):
    """Per-row arguments of the two hinges, each [B, 1]."""
    real_real, real_fake, fake_fake = _pair_scores(d, batch)
    first = add(sub(real_real, real_fake), margin_delta(batch.xr2, batch.yf1))
    second = add(sub(fake_fake, real_fake), margin_delta(batch.yf2, batch.xr1))
    return first, second


def loss_d_triplet(d, batch):
    """Mean of per-row hinges: mean[rr - rf + Δ(xr2, yf1)]+ + mean[ff - rf + Δ(yf2, xr1)]+."""
    first, second = triplet_hinge_args(d, batch)
    return add(mean_all(relu(first)), mean_all(relu(second)))


def loss_d_triplet_variant(d, batch):
    """Batch means taken inside the hinge; never exceeds ``loss_d_triplet``."""
    first, second = triplet_hinge_args(d, batch)
    return add(relu(mean_all(first)), relu(mean_all(second)))


def loss_g_relation(d, batch):
    """2 mean D(xr1, yf1) - mean D(yf1, yf2).

    The generator-independent mean D(xr1, xr2) term cancels out of the
    gradient and is dropped. Gradient reaches the generator through both
    occurrences of yf1.
    """
    e_r1 = d.embed(batch.xr1)
    e_f1 = d.embed(batch.yf1)
    e_f2 = d.embed(batch.yf2)
    real_fake = mean_all(d.relate(e_r1, e_f1))
    fake_fake = mean_all(d.relate(e_f1, e_f2))
    return sub(scalar_mul(real_fake, 2.0), fake_fake)


def loss_d_siamese(d, batch, margin=1.0):
    """Contrastive stand-in for the Siamese ablation.

    Symmetric pairs are pulled to score 0, asymmetric pairs pushed above
    ``margin``. Not a transcription of any published formula.
    """
    real_real, real_fake, fake_fake = _pair_scores(d, batch)
    push = relu(sub(Tensor._wrap(np.full(real_fake.shape, float(margin))), real_fake))
    return add(
        add(mean_all(mul(real_real, real_real)), mean_all(mul(fake_fake, fake_fake))),
        mean_all(mul(push, push)),
    )


def loss_g_siamese(d, batch):
    real_fake = d.relate(d.embed(batch.xr1), d.embed(batch.yf1))
    return mean_all(mul(real_fake, real_fake))


def relation_losses(kind, d, batch):
    """Discriminator loss for a relation tag (the generator loss is separate)."""
    if kind.tag == "relation_triplet":
        return loss_d_triplet(d, batch)
    if kind.tag == "relation_triplet_variant":
        return loss_d_triplet_variant(d, batch)
    if kind.tag == "siamese":
        return loss_d_siamese(d, batch, kind.siamese_margin)
    raise ConfigError(f"{kind.tag!r} is not a relation loss")


def relation_generator_loss(kind, d, batch):
    if kind.tag == "siamese":
        return loss_g_siamese(d, batch)
    if kind.tag in ("relation_triplet", "relation_triplet_variant"):
        return loss_g_relation(d, batch)
    raise ConfigError(f"{kind.tag!r} is not a relation loss")


# -- baselines --------------------------------------------------------------

@dataclass
class PenaltyInputs:
    """Interpolated samples x_hat and the critic closure for WGAN-GP."""

    x_hat: np.ndarray
    critic: object


def gradient_penalty(critic, x_hat):
    """mean((||grad_x D(x_hat)||_2 - 1)^2), differentiable w.r.t. critic params."""
    x = Tensor(x_hat, requires_grad=True)
    tape = active_tape()
    if tape is None:
        # no outer graph: record locally just to obtain the input gradient
        with Tape() as local:
            score_sum = mean_all(critic(x))
        gx = backward(local, score_sum, wrt=[x])[x]
    else:
        score_sum = mean_all(critic(x))
        gx = backward(tape, score_sum, wrt=[x], create_graph=True)[x]
    # mean_all divided by B; undo it so gx is the per-sample input gradient
    gx = scalar_mul(gx, float(x.shape[0]))
    norms = row_l2_norm(gx)
    dev = sub(norms, Tensor._wrap(np.ones(norms.shape)))
    return mean_all(mul(dev, dev))


def interpolate(rng, real, fake):
    """Uniform random points on segments between paired real and fake rows."""
    real = real.data if isinstance(real, Tensor) else np.asarray(real)
    fake = fake.data if isinstance(fake, Tensor) else np.asarray(fake)
    eps = rng.uniform(size=(real.shape[0], 1))
    return eps * real + (1.0 - eps) * fake


def baseline_losses(kind, d_real, d_fake, aux=None):
    """(L_D, L_G) for a single-input critic's scores on real and fake batches."""
    if d_real.shape != d_fake.shape:
        raise DimensionError(f"baseline_losses: score shapes differ {d_real.shape} vs {d_fake.shape}")
    tag = kind.tag
    if tag == "vanilla_ns":
        loss_d = add(mean_all(softplus(scalar_mul(d_real, -1.0))), mean_all(softplus(d_fake)))
        loss_g = mean_all(softplus(scalar_mul(d_fake, -1.0)))
    elif tag == "lsgan":
        one = Tensor._wrap(np.ones(d_real.shape))
        r = sub(d_real, one)
        g = sub(d_fake, one)
        loss_d = scalar_mul(add(mean_all(mul(r, r)), mean_all(mul(d_fake, d_fake))), 0.5)
        loss_g = scalar_mul(mean_all(mul(g, g)), 0.5)
    elif tag in ("wgan", "wgan_gp"):
        loss_d = sub(mean_all(d_fake), mean_all(d_real))
        loss_g = scalar_mul(mean_all(d_fake), -1.0)
        if tag == "wgan_gp":
            if aux is None:
                raise ConfigError("wgan_gp needs PenaltyInputs (x_hat and critic)")
            loss_d = add(loss_d, scalar_mul(gradient_penalty(aux.critic, aux.x_hat), kind.gp_lambda))
    elif tag == "relativistic_hinge":
        mean_r = expand(mean_all(d_real), d_real.shape)
        mean_f = expand(mean_all(d_fake), d_fake.shape)
        one = Tensor._wrap(np.ones(d_real.shape))
        rel_r = sub(d_real, mean_f)
        rel_f = sub(d_fake, mean_r)
        loss_d = add(mean_all(relu(sub(one, rel_r))), mean_all(relu(add(one, rel_f))))
        loss_g = add(mean_all(relu(sub(one, rel_f))), mean_all(relu(add(one, rel_r))))
    else:
        raise ConfigError(f"{tag!r} is not a baseline loss")
    return loss_d, loss_g
