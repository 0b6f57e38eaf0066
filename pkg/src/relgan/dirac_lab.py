"""Two-dimensional Dirac-GAN dynamics under alternating gradient play.

Real data is a point mass at the origin and the generator is a point mass at
``theta``. Baseline losses use a linear critic D(x) = phi . x; the relation
loss uses D(x1, x2) = theta_r (theta_e . x1 + theta_e . x2), i.e. a linear
one-unit embedding followed by a scalar relation weight. The previous
generator position plays the role of the buffered fake sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError
from .grad_core import Tape, Tensor, add, backward, expand, matmul, mul
from .losses import (
    LossKind,
    PenaltyInputs,
    TripletBatch,
    baseline_losses,
    loss_d_triplet,
    loss_g_relation,
)

DIRAC_TAGS = ("vanilla_ns", "wgan", "wgan_gp", "relation_triplet")
DEFAULT_INIT = (0.2, 0.1)
DEFAULT_DISC = {"theta_e": (0.1, 0.1), "theta_r": 0.1, "phi": (0.1, 0.1)}
DIVERGENCE_NORM = 1e3


class DiracRelationDisc:
    def __init__(self, theta_e, theta_r):
        self.theta_e = theta_e  # [2, 1]
        self.theta_r = theta_r  # [1]

    def embed(self, x):
        return matmul(x, self.theta_e)

    def relate(self, e1, e2):
        s = add(e1, e2)
        return mul(s, expand(self.theta_r, s.shape))

    def __call__(self, x1, x2):
        return self.relate(self.embed(x1), self.embed(x2))


class LinearCritic:
    def __init__(self, phi):
        self.phi = phi  # [2, 1]

    def __call__(self, x):
        return matmul(x, self.phi)


@dataclass
class DiracState:
    theta: np.ndarray
    disc: dict
    theta_prev: np.ndarray
    step: int = 0

    def copy(self):
        return DiracState(
            self.theta.copy(),
            {k: np.array(v, dtype=np.float64) for k, v in self.disc.items()},
            self.theta_prev.copy(),
            self.step,
        )


@dataclass
class Trajectory:
    kind: str
    step_size: float
    states: list = field(default_factory=list)

    @property
    def thetas(self):
        return np.array([s.theta for s in self.states])

    @property
    def norms(self):
        return np.linalg.norm(self.thetas, axis=1)

    def rows(self):
        return [
            {"step": s.step, "theta_x": float(s.theta[0]), "theta_y": float(s.theta[1]),
             "norm": float(np.hypot(s.theta[0], s.theta[1]))}
            for s in self.states
        ]


def _kind(kind):
    kind = kind if isinstance(kind, LossKind) else LossKind(kind)
    if kind.tag not in DIRAC_TAGS:
        raise ConfigError(f"dirac: unsupported loss {kind.tag!r}; expected one of {', '.join(DIRAC_TAGS)}")
    return kind


def initial_state(init_theta=DEFAULT_INIT, kind="relation_triplet", disc_init=None, rng=None):
    """Generator at ``init_theta``; theta_prev equals theta at step 0.

    Discriminator parameters come from ``disc_init`` when given, else are
    drawn N(0, 0.1^2) from ``rng`` when given, else take the fixed defaults.
    """
    kind = _kind(kind)
    theta = np.array(init_theta, dtype=np.float64).reshape(2)
    if disc_init is None and rng is not None:
        disc_init = {"theta_e": 0.1 * rng.standard_normal(2),
                     "theta_r": 0.1 * rng.standard_normal(),
                     "phi": 0.1 * rng.standard_normal(2)}
    src = dict(DEFAULT_DISC)
    src.update(disc_init or {})
    if kind.tag == "relation_triplet":
        disc = {"theta_e": np.array(src["theta_e"], dtype=np.float64).reshape(2),
                "theta_r": np.array(src["theta_r"], dtype=np.float64).reshape(1)}
    else:
        disc = {"phi": np.array(src["phi"], dtype=np.float64).reshape(2)}
    return DiracState(theta, disc, theta.copy(), 0)


def _check(step, name, arr):
    if not np.all(np.isfinite(arr)):
        raise DivergenceError(f"dirac: non-finite {name} gradient at step {step}", step)


def dirac_step(state, kind, h):
    """One alternating explicit-Euler round: discriminator first, then generator."""
    kind = _kind(kind)
    if not h > 0:
        raise ConfigError("dirac: step size must be positive")
    origin = Tensor._wrap(np.zeros((1, 2)))
    theta_c = Tensor._wrap(state.theta.reshape(1, 2).copy())
    prev_c = Tensor._wrap(state.theta_prev.reshape(1, 2).copy())
    disc = dict(state.disc)

    if kind.tag == "relation_triplet":
        te = Tensor(disc["theta_e"].reshape(2, 1), requires_grad=True)
        tr = Tensor(disc["theta_r"], requires_grad=True)
        batch = TripletBatch(origin, origin, theta_c, prev_c)
        with Tape() as tape:
            loss_d = loss_d_triplet(DiracRelationDisc(te, tr), batch)
        g = backward(tape, loss_d, wrt=[te, tr])
        _check(state.step, "discriminator", np.concatenate([g[te].data.ravel(), g[tr].data.ravel()]))
        disc["theta_e"] = disc["theta_e"] - h * g[te].data.ravel()
        disc["theta_r"] = disc["theta_r"] - h * g[tr].data.ravel()

        fresh = DiracRelationDisc(Tensor._wrap(disc["theta_e"].reshape(2, 1).copy()),
                                  Tensor._wrap(disc["theta_r"].copy()))
        theta = Tensor(state.theta.reshape(1, 2), requires_grad=True)
        with Tape() as tape:
            loss_g = loss_g_relation(fresh, TripletBatch(origin, origin, theta, prev_c))
        g_theta = backward(tape, loss_g, wrt=[theta])[theta].data.ravel()
    else:
        phi = Tensor(disc["phi"].reshape(2, 1), requires_grad=True)
        critic = LinearCritic(phi)
        aux = None
        if kind.tag == "wgan_gp":
            # the critic is linear, so its input gradient is phi at any x_hat
            aux = PenaltyInputs(0.5 * (origin.data + theta_c.data), critic)
        with Tape() as tape:
            loss_d, _ = baseline_losses(kind, critic(origin), critic(theta_c), aux)
        g_phi = backward(tape, loss_d, wrt=[phi])[phi].data.ravel()
        _check(state.step, "discriminator", g_phi)
        disc["phi"] = disc["phi"] - h * g_phi

        fresh = LinearCritic(Tensor._wrap(disc["phi"].reshape(2, 1).copy()))
        theta = Tensor(state.theta.reshape(1, 2), requires_grad=True)
        # the generator loss carries no penalty term
        gen_kind = LossKind("wgan") if kind.tag == "wgan_gp" else kind
        with Tape() as tape:
            _, loss_g = baseline_losses(gen_kind, fresh(origin), fresh(theta))
        g_theta = backward(tape, loss_g, wrt=[theta])[theta].data.ravel()

    _check(state.step, "generator", g_theta)
    new_theta = state.theta - h * g_theta
    return DiracState(new_theta, disc, state.theta.copy(), state.step + 1)


def dirac_simulate(init_theta=DEFAULT_INIT, kind="relation_triplet", steps=10_000, h=0.05,
                   rng=None, disc_init=None):
    """Iterate ``dirac_step``; the trajectory holds ``steps + 1`` states."""
    if steps < 1:
        raise ConfigError("dirac: steps must be >= 1")
    kind = _kind(kind)
    state = initial_state(init_theta, kind, disc_init, rng)
    traj = Trajectory(kind.tag, h, [state])
    for _ in range(steps):
        try:
            state = dirac_step(state, kind, h)
        except DivergenceError as exc:
            exc.trajectory = traj
            raise
        traj.states.append(state)
    return traj


def classify_convergence(traj, tol=1e-2, window_frac=0.2):
    """'diverged' if any |theta| > 1e3, 'converged' if the trailing window stays below ``tol``."""
    if not 0.0 < window_frac <= 1.0:
        raise ConfigError("window_frac must lie in (0, 1]")
    norms = traj.norms if isinstance(traj, Trajectory) else np.asarray(traj, dtype=np.float64)
    if np.any(~np.isfinite(norms)) or np.any(norms > DIVERGENCE_NORM):
        return "diverged"
    window = norms[-max(1, int(np.ceil(window_frac * len(norms)))):]
    if window.max() < tol:
        return "converged"
    return "oscillating"


def trailing_window(traj, window_frac=0.2):
    norms = traj.norms
    return norms[-max(1, int(np.ceil(window_frac * len(norms)))):]
