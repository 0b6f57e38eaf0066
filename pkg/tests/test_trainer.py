"""Tests for the alternating training loop, the fake buffer and checkpoint resume."""

import numpy as np
import pytest

from relgan.errors import ConfigError, TrainingAborted
from relgan.grad_core import Tape, Tensor, backward, no_record
from relgan.losses import LOSS_TAGS, TripletBatch, loss_d_triplet
from relgan.relnet import sample_latent
from relgan.trainer import (
    TrainConfig,
    TrainState,
    _finite_or_abort,
    evaluate,
    train,
    train_step,
)

SMALL = dict(em_hidden=(16, 16), rm_hidden=(16,), gen_hidden=(16, 16), batch_size=16,
             eval_every=10, eval_samples=1000, checkpoint=False)


def small_config(**kw):
    return TrainConfig(**{**SMALL, "iterations": 20, **kw})


class TestConfig:
    def test_defaults(self):
        c = TrainConfig()
        assert (c.batch_size, c.d_steps_per_g_step, c.lr_g, c.lr_d, c.beta1, c.beta2) == (64, 1, 1e-4, 1e-4, 0.0, 0.9)
        assert c.em_hidden == (128, 128) and c.rm_hidden == (128,) and c.latent_dim == 8

    @pytest.mark.parametrize("bad", [dict(batch_size=1), dict(iterations=0), dict(d_steps_per_g_step=0),
                                     dict(dataset="moons"), dict(loss="hinge"), dict(xr2="paired"),
                                     dict(eval_samples=10)])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


class TestBuffer:
    def test_bootstrap_is_independent_second_draw(self):
        state = TrainState(small_config())
        assert state.buffer.batch is None
        train_step(state)
        assert state.buffer.batch.shape == (16, 2)
        assert state.buffer.version == state.g_version == 1
        assert not state.buffer.batch.requires_grad

    def test_age_never_exceeds_one(self):
        state = TrainState(small_config())
        for _ in range(15):
            before = state.buffer.batch
            train_step(state)
            assert state.buffer.age(state.g_version) == 0
            if before is not None:
                assert not np.array_equal(before.data, state.buffer.batch.data)
        assert state.buffer_max_age <= 1

    def test_buffer_is_post_update_generator_output(self):
        state = TrainState(small_config())
        train_step(state)
        saved = state.rngs["latent"].bit_generator.state
        train_step(state)
        # the step drew one latent batch for D/G, then one for the buffer
        rng = np.random.default_rng()
        rng.bit_generator.state = saved
        sample_latent(rng, 16, 8)
        with no_record():
            expected = state.gen(sample_latent(rng, 16, 8)).data
        assert state.buffer.batch.data.tobytes() == expected.tobytes()


class TestNoLeak:
    def test_discriminator_loss_ignores_generator_params(self):
        state = TrainState(small_config())
        gen, disc = state.gen, state.disc
        rng = np.random.default_rng(0)
        z = sample_latent(rng, 16, 8)
        with no_record():
            yf1 = gen(z).detach()
            yf2 = gen(sample_latent(rng, 16, 8)).detach()
        xr1, xr2 = (Tensor(rng.standard_normal((16, 2))) for _ in range(2))
        batch = TripletBatch(xr1, xr2, yf1, yf2)
        with Tape() as tape:
            base = loss_d_triplet(disc, batch)
        g = backward(tape, base, wrt=gen.params)
        assert all(not np.any(v.data) for v in g.values())
        # finite-difference probe: perturb every generator parameter
        eps = 1e-6
        gen.set_params([Tensor(p.data + eps, requires_grad=True) for p in gen.params])
        assert loss_d_triplet(disc, batch).item() == base.item()


class TestTrain:
    def test_bitwise_determinism(self):
        a = train(small_config(seed=7))
        b = train(small_config(seed=7))
        assert a == b
        assert a.final_samples.tobytes() == b.final_samples.tobytes()

    def test_seeds_differ(self):
        a = train(small_config(seed=1))
        b = train(small_config(seed=2))
        assert a.records != b.records

    def test_records_sorted_and_finite(self):
        r = train(small_config(iterations=25))
        its = [rec["iteration"] for rec in r.records]
        assert its == [10, 20, 25]
        assert all(np.isfinite(rec["score_gap"]) for rec in r.records)
        assert r.buffer_max_age <= 1
        assert 0.0 <= r.assumption1_fraction <= 1.0

    @pytest.mark.parametrize("loss", LOSS_TAGS)
    def test_every_loss_runs(self, loss):
        r = train(small_config(loss=loss, iterations=10))
        rec = r.final
        assert np.isfinite(rec["loss_d"]) and np.isfinite(rec["loss_g"])

    def test_shuffled_xr2_and_swissroll(self):
        r = train(small_config(dataset="swissroll", xr2="shuffled", iterations=10))
        assert r.final["covered_modes"] is None and r.final_coverage is None

    def test_multiple_d_steps(self):
        r = train(small_config(d_steps_per_g_step=3, iterations=10))
        assert r.final["iteration"] == 10

    def test_resume_is_bit_exact(self, tmp_path):
        cfg = small_config(iterations=40, checkpoint=True)
        full = train(cfg, out_dir=tmp_path / "full")
        train(cfg, out_dir=tmp_path / "part", stop_at=20)
        ckpt = tmp_path / "part" / "checkpoints" / "iter_0000020.npz"
        resumed = train(cfg, out_dir=tmp_path / "resumed", resume=ckpt)
        assert resumed.records == full.records
        assert resumed.final_samples.tobytes() == full.final_samples.tobytes()
        for p, q in zip(full.state.gen.params, resumed.state.gen.params):
            assert p.data.tobytes() == q.data.tobytes()

    def test_resume_rejects_other_config(self, tmp_path):
        cfg = small_config(iterations=20, checkpoint=True)
        train(cfg, out_dir=tmp_path)
        with pytest.raises(ConfigError):
            train(small_config(iterations=20, seed=99), resume=tmp_path / "checkpoints" / "iter_0000020.npz")

    def test_nan_aborts_with_record(self):
        state = TrainState(small_config())
        with pytest.raises(TrainingAborted) as info:
            _finite_or_abort(state, float("nan"), 1.0)
        rec = info.value.record
        assert rec["iteration"] == 0 and len(rec["gen_param_norms"]) == len(state.gen.params)


class TestEvaluate:
    def test_minimum_samples(self):
        state = TrainState(small_config())
        with pytest.raises(ConfigError):
            evaluate(state.gen, "ring8", 999, np.random.default_rng(0))

    def test_untrained_generator_covers_few_modes(self):
        state = TrainState(TrainConfig())
        m = evaluate(state.gen, "ring8", 10_000, np.random.default_rng(0), state.disc)
        assert m["covered_modes"] <= 8 and np.isfinite(m["score_gap"])
