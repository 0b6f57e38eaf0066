"""Alternating min-max training on 2-D datasets.

Each iteration runs ``d_steps_per_g_step`` discriminator updates followed by
one generator update. For relation losses the stale fake batch (yf2) comes
from a buffer refilled after every generator update, so it is always exactly
one generator version old.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, TrainingAborted
from .grad_core import AdamHyper, AdamState, Tape, Tensor, adam_step, backward, mean_all, no_record
from .losses import (
    LossKind,
    PenaltyInputs,
    TripletBatch,
    baseline_losses,
    interpolate,
    margin_delta,
    relation_generator_loss,
    relation_losses,
)
from .relnet import (
    build_critic,
    build_generator,
    build_relation_discriminator,
    load_checkpoint,
    sample_latent,
    save_checkpoint,
)
from .synth2d import DATASETS, dataset_spec, mode_coverage, sample_dataset

log = logging.getLogger(__name__)

GAP_BATCH = 512

# published optimizer schedules (lr_g, lr_d, beta1, beta2) for the image benchmarks;
# 2-D runs default to the "lsun" row
OPTIMIZER_PRESETS = {
    "cifar10": {"lr_g": 0.0002, "lr_d": 0.0001, "beta1": 0.9, "beta2": 0.999},
    "celeba": {"lr_g": 0.0002, "lr_d": 0.0001, "beta1": 0.9, "beta2": 0.999},
    "lsun": {"lr_g": 0.0001, "lr_d": 0.0001, "beta1": 0.0, "beta2": 0.9},
    "celeba_hq": {"lr_g": 0.0001, "lr_d": 0.0001, "beta1": 0.0, "beta2": 0.9},
}


def optimizer_preset(name):
    """Adam settings for a named schedule, as TrainConfig keyword overrides."""
    try:
        return dict(OPTIMIZER_PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown optimizer preset {name!r}; expected one of "
                          f"{', '.join(OPTIMIZER_PRESETS)}") from None


@dataclass(frozen=True)
class TrainConfig:
    dataset: str = "ring8"
    loss: str = "relation_triplet"
    batch_size: int = 64
    d_steps_per_g_step: int = 1
    iterations: int = 20_000
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    adam_eps: float = 1e-8
    latent_dim: int = 8
    eval_every: int = 1000
    eval_samples: int = 10_000
    k_sigma: float = 3.0
    seed: int = 0
    em_hidden: tuple = (128, 128)
    rm_hidden: tuple = (128,)
    gen_hidden: tuple = (128, 128)
    leaky_alpha: float = 0.2
    gp_lambda: float = 10.0
    xr2: str = "independent"
    checkpoint: bool = True

    def __post_init__(self):
        for name in ("em_hidden", "rm_hidden", "gen_hidden"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset: unknown value {self.dataset!r}; expected one of {', '.join(DATASETS)}")
        LossKind(self.loss, self.gp_lambda)
        checks = [
            ("batch_size", self.batch_size >= 2, "must be >= 2"),
            ("iterations", self.iterations >= 1, "must be >= 1"),
            ("d_steps_per_g_step", self.d_steps_per_g_step >= 1, "must be >= 1"),
            ("latent_dim", self.latent_dim >= 1, "must be >= 1"),
            ("eval_every", self.eval_every >= 1, "must be >= 1"),
            ("eval_samples", self.eval_samples >= 1000, "must be >= 1000"),
            ("k_sigma", self.k_sigma > 0, "must be > 0"),
            ("lr_g", self.lr_g > 0, "must be > 0"),
            ("lr_d", self.lr_d > 0, "must be > 0"),
            ("beta1", 0 <= self.beta1 < 1, "must lie in [0, 1)"),
            ("beta2", 0 <= self.beta2 < 1, "must lie in [0, 1)"),
            ("adam_eps", self.adam_eps > 0, "must be > 0"),
            ("seed", self.seed >= 0, "must be >= 0"),
            ("leaky_alpha", 0 < self.leaky_alpha < 1, "must lie in (0, 1)"),
            ("xr2", self.xr2 in ("independent", "shuffled"), "must be 'independent' or 'shuffled'"),
            ("rm_hidden", all(w >= 1 for w in self.rm_hidden), "widths must be >= 1"),
            ("em_hidden", all(w >= 1 for w in self.em_hidden), "widths must be >= 1"),
            ("gen_hidden", all(w >= 1 for w in self.gen_hidden), "widths must be >= 1"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{key}: {msg} (got {getattr(self, key)!r})")

    @property
    def loss_kind(self):
        return LossKind(self.loss, self.gp_lambda)

    def to_dict(self):
        d = asdict(self)
        for name in ("em_hidden", "rm_hidden", "gen_hidden"):
            d[name] = list(d[name])
        return d

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class FakeBuffer:
    """Detached generator output plus the generator version that produced it."""

    batch: Tensor | None = None
    version: int = -1

    def age(self, current_version):
        return current_version - self.version


@dataclass
class TrainReport:
    records: list
    config: dict
    final_coverage: object = None
    checkpoint: str | None = None
    assumption1_fraction: float = float("nan")
    buffer_max_age: int = 0
    wall_time: float = field(default=0.0, compare=False)
    final_samples: object = field(default=None, compare=False, repr=False)
    state: object = field(default=None, compare=False, repr=False)

    def csv_rows(self):
        return [
            {"iter": r["iteration"], "loss_d": r["loss_d"], "loss_g": r["loss_g"],
             "modes": r["covered_modes"], "hq": r["hq_fraction"], "gap": r["score_gap"]}
            for r in self.records
        ]

    @property
    def final(self):
        return self.records[-1]


def _rng_streams(seed):
    init, data, latent, evaluation = np.random.SeedSequence(seed).spawn(4)
    return {
        "init": np.random.default_rng(init),
        "data": np.random.default_rng(data),
        "latent": np.random.default_rng(latent),
        "eval": np.random.default_rng(evaluation),
    }


class TrainState:
    """Everything needed to continue a run bit-exactly."""

    def __init__(self, config):
        self.config = config
        self.kind = config.loss_kind
        self.rngs = _rng_streams(config.seed)
        init = self.rngs["init"]
        self.gen = build_generator(init, config.latent_dim, 2, config.gen_hidden, config.leaky_alpha)
        if self.kind.is_relation:
            self.disc = build_relation_discriminator(init, 2, config.em_hidden, config.rm_hidden,
                                                     config.leaky_alpha)
        else:
            self.disc = build_critic(init, 2, config.em_hidden, config.rm_hidden, config.leaky_alpha)
        self.opt_g = AdamState.fresh(self.gen.params, AdamHyper(config.lr_g, config.beta1,
                                                                config.beta2, config.adam_eps))
        self.opt_d = AdamState.fresh(self.disc.params, AdamHyper(config.lr_d, config.beta1,
                                                                 config.beta2, config.adam_eps))
        self.buffer = FakeBuffer()
        self.iteration = 0
        self.g_version = 0
        self.assumption_hits = 0
        self.assumption_total = 0
        self.buffer_max_age = 0
        self.records = []

    # -- checkpointing ------------------------------------------------------

    def save(self, path):
        arrays = {}
        for tag, opt in (("opt_g", self.opt_g), ("opt_d", self.opt_d)):
            for i, (m, v) in enumerate(zip(opt.m, opt.v)):
                arrays[f"{tag}/m/{i}"] = m
                arrays[f"{tag}/v/{i}"] = v
        if self.buffer.batch is not None:
            arrays["buffer"] = self.buffer.batch.data
        meta = {
            "config": self.config.to_dict(),
            "iteration": self.iteration,
            "g_version": self.g_version,
            "buffer_version": self.buffer.version,
            "opt_g_t": self.opt_g.t,
            "opt_d_t": self.opt_d.t,
            "assumption": [self.assumption_hits, self.assumption_total],
            "buffer_max_age": self.buffer_max_age,
            "rng": {k: r.bit_generator.state for k, r in self.rngs.items()},
            "records": self.records,
        }
        return save_checkpoint(path, {"generator": self.gen, "discriminator": self.disc}, arrays, meta)

    @classmethod
    def load(cls, path, config=None):
        modules, arrays, meta = load_checkpoint(path)
        saved = TrainConfig(**_tuples(meta["config"]))
        config = config or saved
        if config != saved:
            raise ConfigError("resume: config differs from the checkpoint's config")
        state = cls(config)
        state.gen.set_params(modules["generator"].params)
        state.disc.set_params(modules["discriminator"].params)
        for tag in ("opt_g", "opt_d"):
            opt = getattr(state, tag)
            n = len(opt.m)
            m = tuple(np.array(arrays[f"{tag}/m/{i}"]) for i in range(n))
            v = tuple(np.array(arrays[f"{tag}/v/{i}"]) for i in range(n))
            setattr(state, tag, AdamState(opt.hyper, m, v, meta[f"{tag}_t"]))
        if "buffer" in arrays:
            state.buffer = FakeBuffer(Tensor(arrays["buffer"]), meta["buffer_version"])
        state.iteration = meta["iteration"]
        state.g_version = meta["g_version"]
        state.assumption_hits, state.assumption_total = meta["assumption"]
        state.buffer_max_age = meta["buffer_max_age"]
        for k, s in meta["rng"].items():
            state.rngs[k].bit_generator.state = s
        state.records = meta["records"]
        return state


def _tuples(d):
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def _finite_or_abort(state, loss_d, loss_g):
    if np.isfinite(loss_d) and np.isfinite(loss_g):
        return
    record = {
        "iteration": state.iteration,
        "loss_d": loss_d,
        "loss_g": loss_g,
        "gen_param_norms": [float(np.linalg.norm(p.data)) for p in state.gen.params],
        "disc_param_norms": [float(np.linalg.norm(p.data)) for p in state.disc.params],
    }
    raise TrainingAborted(f"non-finite loss at iteration {state.iteration}: {record}", record)


def update_fake_buffer(buffer, gen, rng, batch_size, version):
    """Replace the buffer with a fresh detached batch from the (post-update) generator."""
    with no_record():
        batch = gen(sample_latent(rng, batch_size, gen.latent_dim))
    return FakeBuffer(batch.detach(), version)


def _real_pair(state):
    cfg = state.config
    rng = state.rngs["data"]
    xr1 = sample_dataset(cfg.dataset, cfg.batch_size, rng)
    if cfg.xr2 == "shuffled":
        xr2 = xr1[rng.permutation(cfg.batch_size)]
    else:
        xr2 = sample_dataset(cfg.dataset, cfg.batch_size, rng)
    return Tensor._wrap(xr1), Tensor._wrap(xr2)


def _stale_fakes(state):
    """yf2: the buffer, or at iteration 0 a second independent draw."""
    cfg = state.config
    if state.buffer.batch is None:
        state.buffer = update_fake_buffer(state.buffer, state.gen, state.rngs["latent"],
                                          cfg.batch_size, state.g_version)
    age = state.buffer.age(state.g_version)
    if not 0 <= age <= 1:
        raise AssertionError(f"fake buffer is {age} generator updates old")
    state.buffer_max_age = max(state.buffer_max_age, age)
    return state.buffer.batch


def train_step(state):
    """One iteration; returns (loss_d, loss_g) as floats."""
    cfg = state.config
    kind = state.kind
    disc, gen = state.disc, state.gen

    for _ in range(cfg.d_steps_per_g_step):
        xr1, xr2 = _real_pair(state)
        z = sample_latent(state.rngs["latent"], cfg.batch_size, cfg.latent_dim)
        with no_record():
            yf1 = gen(z)
        d_params = disc.params
        if kind.is_relation:
            yf2 = _stale_fakes(state)
            batch = TripletBatch(xr1, xr2, yf1, yf2)
            stale = mean_all(margin_delta(yf2, xr1)).item()
            fresh = mean_all(margin_delta(yf1, xr1)).item()
            state.assumption_hits += int(stale > fresh)
            state.assumption_total += 1
            with Tape() as tape:
                loss_d = relation_losses(kind, disc, batch)
        else:
            aux = None
            if kind.tag == "wgan_gp":
                aux = PenaltyInputs(interpolate(state.rngs["data"], xr1, yf1), disc)
            with Tape() as tape:
                loss_d, _ = baseline_losses(kind, disc(xr1), disc(yf1), aux)
        grads = backward(tape, loss_d, wrt=d_params)
        new_params, state.opt_d = adam_step(state.opt_d, d_params, grads)
        disc.set_params(new_params)

    g_params = gen.params
    with Tape() as tape:
        yf1 = gen(z)
        if kind.is_relation:
            loss_g = relation_generator_loss(kind, disc, TripletBatch(xr1, xr2, yf1, yf2))
        else:
            gen_kind = LossKind("wgan") if kind.tag == "wgan_gp" else kind
            _, loss_g = baseline_losses(gen_kind, disc(xr1), disc(yf1))
    # discriminator gradients from this pass are dropped here
    grads = backward(tape, loss_g, wrt=g_params)
    new_params, state.opt_g = adam_step(state.opt_g, g_params, grads)
    gen.set_params(new_params)
    state.g_version += 1

    if kind.is_relation:
        state.buffer = update_fake_buffer(state.buffer, gen, state.rngs["latent"],
                                          cfg.batch_size, state.g_version)
    state.iteration += 1
    return loss_d.item(), loss_g.item()


def score_gap(disc, gen, dataset, rng, n=GAP_BATCH):
    """Mean asymmetric-pair score minus mean symmetric-pair score.

    For single-input critics: mean score on real minus mean score on fake.
    """
    with no_record():
        xr1 = Tensor._wrap(sample_dataset(dataset, n, rng))
        xr2 = Tensor._wrap(sample_dataset(dataset, n, rng))
        yf1 = gen(sample_latent(rng, n, gen.latent_dim))
        yf2 = gen(sample_latent(rng, n, gen.latent_dim))
        if hasattr(disc, "relate"):
            asym = disc(xr1, yf1).data.mean()
            sym = 0.5 * (disc(xr1, xr2).data.mean() + disc(yf1, yf2).data.mean())
            return float(asym - sym)
        return float(disc(xr1).data.mean() - disc(yf1).data.mean())


def evaluate(gen, dataset, n, rng, disc=None, k_sigma=3.0):
    """Coverage of ``n`` generated samples plus the score-gap statistic."""
    if n < 1000:
        raise ConfigError("evaluate: n must be >= 1000")
    with no_record():
        samples = gen(sample_latent(rng, n, gen.latent_dim)).data
    spec = dataset_spec(dataset)
    coverage = mode_coverage(samples, spec, k_sigma) if spec is not None else None
    gap = score_gap(disc, gen, dataset, rng) if disc is not None else float("nan")
    return {
        "samples": samples,
        "coverage": coverage,
        "covered_modes": coverage.covered_modes if coverage else None,
        "hq_fraction": coverage.hq_fraction if coverage else None,
        "score_gap": gap,
    }


def train(config, out_dir=None, resume=None, stop_at=None, progress=None):
    """Run (or resume) a training job.

    ``out_dir`` receives a checkpoint at every evaluation when
    ``config.checkpoint`` is set. ``stop_at`` ends the run early at that
    iteration count (used to split a run into resumable segments).
    """
    start = time.perf_counter()
    state = TrainState.load(resume, config) if resume else TrainState(config)
    end = config.iterations if stop_at is None else min(stop_at, config.iterations)
    ckpt = None
    last_eval = None
    while state.iteration < end:
        loss_d, loss_g = train_step(state)
        _finite_or_abort(state, loss_d, loss_g)
        it = state.iteration
        if it % config.eval_every == 0 or it == config.iterations:
            last_eval = evaluate(state.gen, config.dataset, config.eval_samples,
                                 state.rngs["eval"], state.disc, config.k_sigma)
            if not np.isfinite(last_eval["score_gap"]):
                raise TrainingAborted(f"non-finite score gap at iteration {it}",
                                      {"iteration": it, "score_gap": last_eval["score_gap"]})
            state.records.append({
                "iteration": it,
                "loss_d": loss_d,
                "loss_g": loss_g,
                "covered_modes": last_eval["covered_modes"],
                "hq_fraction": last_eval["hq_fraction"],
                "score_gap": last_eval["score_gap"],
            })
            log.info("iter %d loss_d %.4f loss_g %.4f modes %s hq %s gap %.4f", it, loss_d, loss_g,
                     last_eval["covered_modes"], last_eval["hq_fraction"], last_eval["score_gap"])
            if progress is not None:
                progress(state.records[-1])
            if out_dir is not None and config.checkpoint:
                ckpt = str(state.save(Path(out_dir) / "checkpoints" / f"iter_{it:07d}.npz"))
    frac = (state.assumption_hits / state.assumption_total) if state.assumption_total else float("nan")
    report = TrainReport(
        records=list(state.records),
        config=config.to_dict(),
        final_coverage=last_eval["coverage"] if last_eval else None,
        checkpoint=ckpt,
        assumption1_fraction=frac,
        buffer_max_age=state.buffer_max_age,
        wall_time=time.perf_counter() - start,
        final_samples=last_eval["samples"] if last_eval else None,
        state=state,
    )
    return report


def config_hash(config):
    return json.dumps(config.to_dict(), sort_keys=True)
