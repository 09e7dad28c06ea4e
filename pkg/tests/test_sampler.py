import warnings

import numpy as np
import pytest
from scipy import stats

from vegcover.errors import ConfigError, NumericalError
from vegcover.likelihood import PreparedData, SiteBlock, SiteStats, total_loglik
from vegcover.model import ParameterState, PriorSpec, log_prior, sample_prior
from vegcover.sampler import (ChainConfig, DegenerateTraceWarning, LowESSWarning, PosteriorDraws,
                              effective_sample_size, run_chain, slice_update_scalar)

SMALL = {"L": 3, "M": 2, "P": 2, "K": 3}


def empty_stats(dims):
    return SiteStats.empty([], dims["L"], np.zeros((0, dims["P"])), np.zeros((0, dims["M"])))


def tiny_data(seed=0, n_lab=6, n_unl=4, n=8):
    rng = np.random.default_rng(seed)
    L, M, P, K = (SMALL[k] for k in ("L", "M", "P", "K"))
    truth = sample_prior(PriorSpec(), SMALL, rng)
    blocks = []
    for j in range(n_lab + n_unl):
        G = rng.standard_normal((n, L))
        y = j % K
        r = G @ truth.Gamma[:, y] + np.sqrt(truth.sigma2) * rng.standard_normal(n)
        blocks.append(SiteBlock(f"s{j}", G, r, rng.standard_normal(P), rng.standard_normal(M),
                                y if j < n_lab else None))
    return PreparedData(blocks[:n_lab], blocks[n_lab:], L, M, P, K)


class TestSliceUpdate:
    def test_standard_normal_calibration(self):
        rng = np.random.default_rng(1)
        x, out = 0.0, np.empty(10_000)
        for i in range(len(out)):
            x, _ = slice_update_scalar(lambda v: -0.5 * v * v, x, 1.0, 100, rng)
            out[i] = x
        assert abs(out.mean()) < 0.05
        assert abs(out.var() - 1.0) < 0.1

    def test_uniform_support(self):
        rng = np.random.default_rng(2)
        f = lambda v: 0.0 if 0.0 <= v <= 1.0 else -np.inf  # noqa: E731
        x = 0.5
        for _ in range(2000):
            x, fx = slice_update_scalar(f, x, 0.3, 100, rng)
            assert 0.0 <= x <= 1.0 and fx == 0.0

    def test_slab_is_uniform_by_ks(self):
        rng = np.random.default_rng(3)
        a, b = -1.0, 2.5
        f = lambda v: 0.0 if a <= v <= b else -np.inf  # noqa: E731
        x, out = 0.0, np.empty(5000)
        for i in range(len(out)):
            x, _ = slice_update_scalar(f, x, b - a, 100, rng)
            out[i] = x
        assert stats.kstest(out, "uniform", args=(a, b - a)).pvalue > 0.01

    def test_nonfinite_start_rejected(self):
        with pytest.raises(NumericalError):
            slice_update_scalar(lambda v: -np.inf, 0.0, 1.0, 10, np.random.default_rng(0))

    def test_returned_logp_matches_target(self):
        rng = np.random.default_rng(4)
        f = lambda v: -abs(v) ** 1.5  # noqa: E731
        x = 0.3
        for _ in range(200):
            x, fx = slice_update_scalar(f, x, 0.7, 5, rng)
            assert fx == f(x)


class TestESS:
    def test_iid_normal(self):
        x = np.random.default_rng(5).standard_normal(10_000)
        assert 8500 <= effective_sample_size(x) <= 11_500

    def test_ar1(self):
        rng = np.random.default_rng(6)
        n, phi = 50_000, 0.9
        e = rng.standard_normal(n)
        x = np.empty(n)
        x[0] = e[0] / np.sqrt(1 - phi ** 2)
        for t in range(1, n):
            x[t] = phi * x[t - 1] + e[t]
        want = n * (1 - phi) / (1 + phi)
        assert abs(effective_sample_size(x) - want) < 0.25 * want

    def test_constant_trace_flagged(self):
        with pytest.warns(DegenerateTraceWarning):
            assert effective_sample_size(np.ones(50)) == 0.0

    def test_short_trace_rejected(self):
        with pytest.raises(ConfigError):
            effective_sample_size(np.arange(5.0))

    def test_bounded_by_n(self):
        x = np.tile([1.0, -1.0], 50)  # negatively correlated
        assert 0 < effective_sample_size(x) <= 100


class TestRunChain:
    def test_single_draw_bookkeeping(self):
        data = tiny_data()
        out = run_chain(data, PriorSpec(), ChainConfig(n_burnin=0, n_keep=1, thin=1, seed=3))
        assert len(out.draws) == 1 and len(out.logpost_trace) == 1
        from vegcover.sampler import initial_state
        init = initial_state(data.stats(), PriorSpec(), SMALL)
        assert not np.array_equal(out.draws[0].Gamma, init.Gamma)

    def test_trace_length_with_thinning(self):
        out = run_chain(tiny_data(), PriorSpec(), ChainConfig(n_burnin=5, n_keep=4, thin=3, seed=1))
        assert len(out.logpost_trace) == 5 + 4 * 3
        assert len(out.draws) == 4

    def test_reproducible(self):
        cfg = ChainConfig(n_burnin=10, n_keep=10, seed=42)
        a = run_chain(tiny_data(), PriorSpec(), cfg)
        b = run_chain(tiny_data(), PriorSpec(), cfg)
        assert np.array_equal(a.logpost_trace, b.logpost_trace)
        assert np.array_equal(a.draws.flat()[1], b.draws.flat()[1])

    def test_baseline_columns_zero_in_every_draw(self):
        out = run_chain(tiny_data(), PriorSpec(), ChainConfig(n_burnin=5, n_keep=20, seed=2))
        assert np.all(out.draws.B[:, :, -1] == 0)
        assert np.all(out.draws.Phi[:, :, -1] == 0)
        for d in out.draws:
            d.validate()

    def test_trace_equals_log_posterior_of_draws(self):
        data = tiny_data()
        prior = PriorSpec()
        out = run_chain(data, prior, ChainConfig(n_burnin=3, n_keep=5, seed=7))
        for t in range(5):
            theta = out.draws[t]
            want = log_prior(theta, prior) + total_loglik(theta, data)
            assert out.logpost_trace[3 + t] == pytest.approx(want, rel=1e-9, abs=1e-8)

    def test_fixed_scan_and_scalar_only_moves(self):
        cfg = ChainConfig(n_burnin=2, n_keep=3, seed=8, scan_order="fixed", factor_updates=False)
        out = run_chain(tiny_data(), PriorSpec(), cfg)
        assert len(out.draws) == 3

    def test_nonfinite_initial_state_rejected(self):
        theta = ParameterState.zeros(3, 2, 2, 3, sigma2=0.4)
        theta.Gamma[0, 0] = np.nan
        with pytest.raises(NumericalError):
            run_chain(tiny_data(), PriorSpec(), ChainConfig(n_burnin=0, n_keep=1), init=theta)

    def test_low_ess_on_B_warns(self):
        with pytest.warns(LowESSWarning):
            run_chain(tiny_data(), PriorSpec(), ChainConfig(n_burnin=0, n_keep=20, seed=9))

    def test_invalid_config_rejected(self):
        with pytest.raises(ConfigError):
            ChainConfig(n_keep=0)
        with pytest.raises(ConfigError):
            ChainConfig(scan_order="sideways")

    def test_prior_recovery_within_three_standard_errors(self):
        prior = PriorSpec()
        cfg = ChainConfig(n_burnin=200, n_keep=4000, seed=11)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LowESSWarning)
            out = run_chain(empty_stats(SMALL), prior, cfg, dims=SMALL)
        names, flat = out.draws.flat()
        checks = {
            "Gamma[1,1]": (0.0, np.sqrt(prior.gamma_scale)),
            "B[1,1]": (0.0, np.sqrt(prior.beta_scale)),
            "Phi[2,2]": (0.0, np.sqrt(prior.phi_scale)),
            "sigma2": (prior.sigma2_shape / prior.sigma2_rate, np.sqrt(prior.sigma2_shape) / prior.sigma2_rate),
        }
        for name, (mean, sd) in checks.items():
            col = flat[:, names.index(name)]
            se = sd / np.sqrt(effective_sample_size(col))
            assert abs(col.mean() - mean) < 3 * se, name
            assert abs(col.std() - sd) < 0.1 * sd, name


class TestPosteriorDraws:
    def test_flat_round_trip(self):
        rng = np.random.default_rng(0)
        states = [sample_prior(PriorSpec(), SMALL, rng) for _ in range(4)]
        d = PosteriorDraws.from_states(states)
        names, vals = d.flat()
        back = PosteriorDraws.from_flat(names, vals, d.dims)
        assert np.array_equal(back.Gamma, d.Gamma) and np.array_equal(back.sigma2, d.sigma2)
        assert names[0] == "Gamma[1,1]" and names[-1] == "sigma2"
        assert len(d.stride(2)) == 2
