import math

import numpy as np
import pytest
import torch

from prefixlso import prefix_graph as pg
from prefixlso import surrogate as sg

TINY = sg.ModelConfig(width=8, latent_dim=8, conv_filters=4, conv_blocks=1, dtype="float64")


def tiny_model(seed=0, config=TINY):
    return sg.init_model(config, np.random.default_rng(seed))


def random_bits_batch(width, n, seed=0):
    rng = np.random.default_rng(seed)
    return np.stack([pg.random_bits(width, rng, "ripple", 2 * width) for _ in range(n)])


def force_encoder_output(model, mu, logvar):
    """Zero the encoder head and bias it to a constant (mu, logvar)."""
    with torch.no_grad():
        model.net.enc_out.weight.zero_()
        model.net.enc_out.bias.copy_(
            torch.tensor(list(mu) + list(logvar), dtype=model.config.torch_dtype)
        )


class TestInit:
    def test_same_seed_identical(self):
        a, b = tiny_model(7), tiny_model(7)
        for (na, pa), (nb, pb) in zip(a.net.named_parameters(), b.net.named_parameters()):
            assert na == nb
            assert torch.equal(pa, pb)

    def test_encoder_emits_two_d(self):
        model = sg.init_model(sg.ModelConfig.desk(16), np.random.default_rng(0))
        mu, sigma = sg.encode(model, pg.sklansky(16))
        assert mu.shape == (32,) and sigma.shape == (32,)

    def test_decoder_slot_count_width16(self):
        model = sg.init_model(sg.ModelConfig.desk(16), np.random.default_rng(0))
        logits = sg.decode_logits(model, np.zeros(32))
        assert logits.shape == (120,)

    def test_zeroed_output_layers(self):
        model = tiny_model()
        assert float(model.net.dec_out.weight.detach().abs().sum()) == 0.0
        assert float(model.net.head_out.weight.detach().abs().sum()) == 0.0
        assert sg.predict_cost(model, np.zeros(8)) == 0.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            sg.ModelConfig(width=8, kernel_size=4)
        with pytest.raises(ValueError):
            sg.ModelConfig(width=8, latent_dim=0)
        with pytest.raises(ValueError):
            sg.ModelConfig(width=8, dtype="float16")


class TestEncode:
    def test_sigma_strictly_positive(self):
        model = tiny_model()
        _, sigma = sg.encode(model, random_bits_batch(8, 16))
        assert (sigma > 0).all()

    def test_identical_graphs_identical_encoding(self):
        model = tiny_model()
        g = pg.kogge_stone(8)
        mu1, s1 = sg.encode(model, g)
        mu2, s2 = sg.encode(model, g)
        assert (mu1 == mu2).all() and (s1 == s2).all()

    def test_one_node_difference_changes_mu(self):
        model = tiny_model()
        a = pg.to_bitvector(pg.ripple_carry(8)).to_numpy()
        b = a.copy()
        b[pg.slot_index(5, 2)] = True
        mu_a, _ = sg.encode(model, a)
        mu_b, _ = sg.encode(model, b)
        assert not np.allclose(mu_a, mu_b)

    def test_width_mismatch(self):
        with pytest.raises(ValueError):
            sg.encode(tiny_model(), pg.ripple_carry(16))


class TestSamplePosterior:
    def test_zero_sigma_returns_mu(self):
        rng = np.random.default_rng(0)
        mu = rng.standard_normal(8)
        z = sg.sample_posterior(mu, np.zeros(8), rng)
        assert (z == mu).all()

    def test_seed_reproducible(self):
        mu, sigma = np.zeros(8), np.ones(8)
        z1 = sg.sample_posterior(mu, sigma, np.random.default_rng(3))
        z2 = sg.sample_posterior(mu, sigma, np.random.default_rng(3))
        assert (z1 == z2).all()

    def test_monte_carlo_mean(self):
        rng = np.random.default_rng(1)
        mu = np.array([0.5, -2.0, 3.0])
        sigma = np.array([1.0, 0.5, 2.0])
        n = 100_000
        draws = sg.sample_posterior(
            np.tile(mu, (n, 1)), np.tile(sigma, (n, 1)), rng
        )
        err = np.abs(draws.mean(axis=0) - mu)
        assert (err < 3 * sigma / math.sqrt(n)).all()


class TestElboTerms:
    def test_prior_match_gives_zero_kl(self):
        model = tiny_model()
        force_encoder_output(model, [0.0] * 8, [0.0] * 8)
        _, kl = sg.elbo_terms(model, pg.ripple_carry(8), np.zeros(8))
        assert kl == pytest.approx(0.0, abs=1e-12)

    def test_unit_shift_kl(self):
        # mu=(1,1), sigma=(1,1) in two coordinates -> kl = 1.0
        model = tiny_model(config=sg.ModelConfig(width=8, latent_dim=2, conv_filters=4,
                                                 conv_blocks=1, dtype="float64"))
        force_encoder_output(model, [1.0, 1.0], [0.0, 0.0])
        _, kl = sg.elbo_terms(model, pg.ripple_carry(8), np.zeros(2))
        assert kl == pytest.approx(1.0, abs=1e-12)

    def test_zero_logits_recon_is_uniform(self):
        model = tiny_model()  # dec_out zero-initialized -> all logits 0
        bits = pg.to_bitvector(pg.ripple_carry(8)).to_numpy()
        recon, _ = sg.elbo_terms(model, bits, np.zeros(8))
        assert recon == pytest.approx(pg.n_slots(8) * math.log(2), rel=1e-12)

    def test_kl_nonnegative_on_random_inputs(self):
        model = tiny_model(seed=11)
        for i in range(10):
            bits = random_bits_batch(8, 1, seed=i)[0]
            _, kl = sg.elbo_terms(model, bits, np.zeros(8))
            assert kl >= 0.0


class TestWarmup:
    def test_spec_schedule(self):
        tc = sg.TrainConfig()
        assert tc.beta * sg.kl_warmup(0, tc.kl_warmup_steps) == 0.0
        assert tc.beta * sg.kl_warmup(1000, tc.kl_warmup_steps) == pytest.approx(tc.beta / 2)
        assert tc.beta * sg.kl_warmup(2000, tc.kl_warmup_steps) == tc.beta
        assert tc.beta * sg.kl_warmup(9999, tc.kl_warmup_steps) == tc.beta

    def test_total_loss_has_no_kl_at_step_zero(self):
        model = tiny_model()
        bits = random_bits_batch(8, 4)
        tc = sg.TrainConfig(ae_weight=0.0, lam=0.0)
        rng = np.random.default_rng(0)
        assert sg.total_loss(model, bits, np.zeros(4), 0, tc, rng) == 0.0
        assert sg.total_loss(model, bits, np.zeros(4), 2000, tc, rng) > 0.0


class TestTrainRound:
    def test_dataset_too_small(self):
        model = tiny_model()
        bits = random_bits_batch(8, 4)
        with pytest.raises(ValueError):
            sg.train_round(model, bits, np.zeros(4), np.full(4, 0.25),
                           sg.TrainConfig(batch_size=64), np.random.default_rng(0))

    def test_skip_leaves_parameters_identical(self):
        model = tiny_model()
        bits = random_bits_batch(8, 8)
        before = [p.detach().clone() for p in model.net.parameters()]
        tc = sg.TrainConfig(batch_size=4, steps_per_round=3,
                            grad_clip_norm=1e-12, grad_skip_norm=1e-12)
        stats = sg.train_round(model, bits, np.arange(8.0), np.full(8, 0.125), tc,
                               np.random.default_rng(0))
        assert stats["skipped"] == 3
        assert model.step == 3
        for p, b in zip(model.net.parameters(), before):
            assert torch.equal(p, b)

    def test_deterministic_given_seed(self):
        runs = []
        for _ in range(2):
            model = tiny_model(5)
            bits = random_bits_batch(8, 12, seed=2)
            tc = sg.TrainConfig(batch_size=4, steps_per_round=10)
            sg.train_round(model, bits, np.arange(12.0), np.full(12, 1 / 12), tc,
                           np.random.default_rng(9))
            runs.append([p.detach().clone() for p in model.net.parameters()])
        for a, b in zip(*runs):
            assert torch.equal(a, b)

    def test_training_reduces_loss(self):
        model = tiny_model()
        bits = random_bits_batch(8, 16, seed=3)
        costs = np.linspace(3.0, 9.0, 16)
        w = np.full(16, 1 / 16)
        tc = sg.TrainConfig(batch_size=8, steps_per_round=150)
        rng = np.random.default_rng(4)
        first = sg.total_loss(model, bits, model.standardize(costs), 0,
                              sg.TrainConfig(), np.random.default_rng(0))
        sg.train_round(model, bits, costs, w, tc, rng)
        after = sg.total_loss(model, bits, model.standardize(costs), 0,
                              sg.TrainConfig(), np.random.default_rng(0))
        assert after < first

    def test_weights_must_be_normalized(self):
        model = tiny_model()
        bits = random_bits_batch(8, 8)
        with pytest.raises(ValueError):
            sg.train_round(model, bits, np.zeros(8), np.full(8, 1.0),
                           sg.TrainConfig(batch_size=4, steps_per_round=1),
                           np.random.default_rng(0))


class TestStandardizer:
    def test_round_trip(self):
        model = tiny_model()
        model.cost_mean, model.cost_std = 5.5, 2.25
        costs = np.array([1.0, 5.5, 9.75])
        assert np.allclose(model.destandardize(model.standardize(costs)), costs, atol=1e-12)

    def test_predict_cost_destandardize(self):
        model = tiny_model()
        model.cost_mean, model.cost_std = 4.0, 3.0
        z = np.zeros(8)
        assert sg.predict_cost(model, z, destandardize=True) == pytest.approx(4.0)


class TestCheckpoint:
    def test_save_load_save_byte_identical(self, tmp_path):
        model = tiny_model()
        bits = random_bits_batch(8, 8)
        sg.train_round(model, bits, np.arange(8.0), np.full(8, 0.125),
                       sg.TrainConfig(batch_size=4, steps_per_round=5),
                       np.random.default_rng(0))
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        sg.save_model(model, p1)
        loaded = sg.load_model(p1)
        sg.save_model(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_loaded_model_behaves_identically(self, tmp_path):
        model = tiny_model(3)
        path = tmp_path / "m.bin"
        sg.save_model(model, path)
        loaded = sg.load_model(path)
        bits = random_bits_batch(8, 4)
        mu1, s1 = sg.encode(model, bits)
        mu2, s2 = sg.encode(loaded, bits)
        assert (mu1 == mu2).all() and (s1 == s2).all()
        assert loaded.step == model.step
        assert loaded.cost_mean == model.cost_mean

    def test_resume_training_matches_uninterrupted(self, tmp_path):
        bits = random_bits_batch(8, 8, seed=6)
        costs, w = np.arange(8.0), np.full(8, 0.125)
        tc = sg.TrainConfig(batch_size=4, steps_per_round=4)

        solid = tiny_model(1)
        rng = np.random.default_rng(2)
        sg.train_round(solid, bits, costs, w, tc, rng)
        sg.train_round(solid, bits, costs, w, tc, rng)

        resumed = tiny_model(1)
        rng = np.random.default_rng(2)
        sg.train_round(resumed, bits, costs, w, tc, rng)
        path = tmp_path / "ckpt.bin"
        sg.save_model(resumed, path)
        resumed = sg.load_model(path)
        sg.train_round(resumed, bits, costs, w, tc, rng)

        for a, b in zip(solid.net.parameters(), resumed.net.parameters()):
            assert torch.equal(a, b)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_bytes(b"whatever")
        with pytest.raises(ValueError):
            sg.load_model(path)


class TestGradCheck:
    def test_toy_quadratic(self):
        # scalar sanity for the finite-difference convention itself
        f = lambda w: w * w
        eps = 1e-6
        fd = (f(3 + eps) - f(3 - eps)) / (2 * eps)
        assert fd == pytest.approx(6.0, abs=1e-8)

    def test_small_random_configs_under_1e4(self):
        rng = np.random.default_rng(0)
        for seed in range(3):
            cfg = sg.ModelConfig(width=8, latent_dim=int(rng.integers(4, 12)),
                                 conv_filters=int(rng.integers(3, 8)),
                                 conv_blocks=int(rng.integers(1, 3)), dtype="float64")
            model = sg.init_model(cfg, np.random.default_rng(seed))
            bits = random_bits_batch(8, 4, seed=seed)
            err = sg.grad_check(model, bits, rng.standard_normal(4), sg.TrainConfig(),
                                np.random.default_rng(seed), n_coords=80)
            assert err < 1e-4

    def test_zero_loss_config_zero_gradients(self):
        model = tiny_model()
        bits = random_bits_batch(8, 4)
        tc = sg.TrainConfig(beta=0.0, lam=0.0, ae_weight=0.0)
        err = sg.grad_check(model, bits, np.zeros(4), tc, np.random.default_rng(0),
                            n_coords=60)
        assert err == 0.0

    def test_requires_float64(self):
        model = sg.init_model(sg.ModelConfig(width=8, latent_dim=4, conv_filters=4,
                                             conv_blocks=1), np.random.default_rng(0))
        with pytest.raises(ValueError):
            sg.grad_check(model, random_bits_batch(8, 2), np.zeros(2), sg.TrainConfig(),
                          np.random.default_rng(0))
