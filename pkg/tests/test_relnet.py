"""Tests for MLPs, the relation discriminator, the generator and checkpoints."""

import numpy as np
import pytest

from relgan.errors import ArtifactIOError, ConfigError, DimensionError
from relgan.grad_core import Tensor, concat_feature, grad_check, sum_all
from relgan.relnet import (
    Mlp,
    MlpSpec,
    RelationDiscriminator,
    build_critic,
    build_generator,
    build_relation_discriminator,
    discriminate_pair,
    load_checkpoint,
    mlp_init,
    sample_latent,
    save_checkpoint,
)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


class TestMlp:
    def test_init_deterministic(self):
        spec = MlpSpec((2, 128, 128))
        a = mlp_init(spec, np.random.default_rng(7))
        b = mlp_init(spec, np.random.default_rng(7))
        for p, q in zip(a.params, b.params):
            assert p.data.tobytes() == q.data.tobytes()

    def test_biases_zero(self, rng):
        net = mlp_init(MlpSpec((2, 16, 8, 1)), rng)
        for b in net.params[1::2]:
            assert not np.any(b.data)

    def test_he_scale(self, rng):
        net = mlp_init(MlpSpec((128, 128, 1)), rng)
        std = net.params[0].data.std()
        assert abs(std - np.sqrt(2 / 128)) / np.sqrt(2 / 128) < 0.15

    def test_param_count_closed_form(self, rng):
        spec = MlpSpec((2, 128, 128))
        net = mlp_init(spec, rng)
        assert spec.param_count == sum(p.size for p in net.params) == 2 * 128 + 128 + 128 * 128 + 128

    def test_bad_spec(self):
        with pytest.raises(ConfigError):
            MlpSpec((2,))
        with pytest.raises(ConfigError):
            MlpSpec((2, 4), hidden_activation="gelu")
        with pytest.raises(ConfigError):
            MlpSpec((2, 4), leaky_alpha=0.0)

    def test_wrong_input_width(self, rng):
        net = mlp_init(MlpSpec((3, 4, 1)), rng)
        with pytest.raises(DimensionError):
            net(Tensor(np.ones((5, 2))))


class TestRelationDiscriminator:
    def test_default_shapes(self, rng):
        d = build_relation_discriminator(rng)
        assert d.em.spec.layer_sizes == (2, 128, 128)
        assert d.rm.spec.layer_sizes == (256, 128, 1)
        assert d.rm.spec.output_activation == "linear"
        x = Tensor(rng.standard_normal((64, 2)))
        assert d(x, x).shape == (64, 1)

    def test_pure_function(self, rng):
        d = build_relation_discriminator(rng, em_hidden=(16, 16), rm_hidden=(16,))
        a = Tensor(rng.standard_normal((10, 2)))
        s1 = discriminate_pair(d, a, a).data
        s2 = discriminate_pair(d, a, a).data
        assert s1.tobytes() == s2.tobytes()

    def test_weight_tying(self, rng):
        d = build_relation_discriminator(rng, em_hidden=(8, 6), rm_hidden=(4,))
        x = Tensor(rng.standard_normal((5, 2)))
        feats = d.embed(x).data
        # both halves of the RM input are the same embedding
        pair = concat_feature(d.embed(x), d.embed(x)).data
        np.testing.assert_array_equal(pair[:, :6], feats)
        np.testing.assert_array_equal(pair[:, 6:], feats)

    def test_order_matters(self, rng):
        d = build_relation_discriminator(rng, em_hidden=(16, 16), rm_hidden=(16,))
        a = Tensor(rng.standard_normal((8, 2)))
        b = Tensor(rng.standard_normal((8, 2)))
        assert not np.allclose(d(a, b).data, d(b, a).data)

    def test_rm_width_must_be_twice_em(self, rng):
        em = mlp_init(MlpSpec((2, 8)), rng)
        rm = mlp_init(MlpSpec((8, 1)), rng)
        with pytest.raises(ConfigError):
            RelationDiscriminator(em, rm)

    def test_pair_shape_mismatch(self, rng):
        d = build_relation_discriminator(rng, em_hidden=(4,), rm_hidden=(4,))
        with pytest.raises(DimensionError):
            d(Tensor(np.ones((3, 2))), Tensor(np.ones((4, 2))))

    @pytest.mark.parametrize("em_hidden,rm_hidden", [((8, 8), (8,)), ((8,), (8, 8)), ((), (8, 8, 8))])
    def test_split_parameter_count(self, rng, em_hidden, rm_hidden):
        d = build_relation_discriminator(rng, em_hidden=em_hidden, rm_hidden=rm_hidden)
        em_count = d.em.spec.param_count if d.em is not None else 0
        assert sum(p.size for p in d.params) == em_count + d.rm.spec.param_count
        assert d.split == (len(em_hidden), len(rm_hidden) + 1)

    def test_no_em_ablation_concats_raw_inputs(self, rng):
        d = build_relation_discriminator(rng, em_hidden=(), rm_hidden=(8,))
        assert d.em is None and d.rm.in_dim == 4

    def test_gradient_through_both_embeddings(self, rng):
        d = build_relation_discriminator(rng, em_hidden=(5, 4), rm_hidden=(3,))
        a = Tensor(rng.standard_normal((6, 2)))
        b = Tensor(rng.standard_normal((6, 2)))
        params = [Tensor(p.data, requires_grad=True) for p in d.params]
        k = len(d.em.params)

        def f(*ps):
            net = RelationDiscriminator(Mlp(d.em.spec, ps[:k]), Mlp(d.rm.spec, ps[k:]))
            return sum_all(net(a, b))

        assert grad_check(f, params) < 1e-4

    def test_critic_matches_em_plus_head(self, rng):
        c = build_critic(rng, em_hidden=(128, 128), rm_hidden=(128,))
        assert c.net.spec.layer_sizes == (2, 128, 128, 128, 1)


class TestGenerator:
    def test_shape(self, rng):
        g = build_generator(rng)
        assert g(sample_latent(rng, 256, 8)).shape == (256, 2)

    def test_zero_latent_constant_rows(self, rng):
        g = build_generator(rng, hidden=(16, 16))
        out = g(Tensor(np.zeros((5, 8)))).data
        assert np.all(out == out[0])

    def test_latent_determinism_and_moments(self):
        z1 = sample_latent(np.random.default_rng(3), 4, 8).data
        z2 = sample_latent(np.random.default_rng(3), 4, 8).data
        assert z1.tobytes() == z2.tobytes()
        z = sample_latent(np.random.default_rng(0), 100_000, 1).data
        assert abs(z.mean()) < 0.02
        assert abs(z.var() - 1.0) < 0.05

    def test_non_finite_latent_rejected(self, rng):
        g = build_generator(rng, hidden=(4,))
        z = np.zeros((2, 8))
        z[0, 0] = np.nan
        with pytest.raises(ConfigError):
            g(Tensor(z))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        d = build_relation_discriminator(rng, em_hidden=(8, 8), rm_hidden=(8,))
        g = build_generator(rng, hidden=(8,))
        path = save_checkpoint(tmp_path / "c.npz", {"disc": d, "gen": g}, {"extra": np.arange(3.0)}, {"k": 1})
        modules, arrays, meta = load_checkpoint(path)
        for a, b in zip(d.params + g.params, modules["disc"].params + modules["gen"].params):
            assert a.data.tobytes() == b.data.tobytes()
        np.testing.assert_array_equal(arrays["extra"], np.arange(3.0))
        assert meta == {"k": 1}

    def test_missing_file(self, tmp_path):
        with pytest.raises(ArtifactIOError):
            load_checkpoint(tmp_path / "absent.npz")
