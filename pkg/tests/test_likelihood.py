import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vegcover.errors import ConfigError, NumericalError
from vegcover.likelihood import (PreparedData, SiteBlock, SiteStats, logit_transform, loglik_labeled_site,
                                 loglik_unlabeled_site, total_loglik)
from vegcover.model import ParameterState, PriorSpec, cover_probabilities, log_cover_probabilities, sample_prior

# Frozen mpmath values: log((1 - 1e-6) / 1e-6) and logit(0.26894142).
LOGIT_UPPER_CLAMP = 13.81550955796377410377461514477265191211
LOGIT_0_26894142 = -1.000000006968016133954141693290724871065


def mp_gauss(r, mu, s2):
    r, mu, s2 = mp.mpf(r), mp.mpf(mu), mp.mpf(s2)
    return mp.exp(-(r - mu) ** 2 / (2 * s2)) / mp.sqrt(2 * mp.pi * s2)


def mp_site_density(G, r, gamma, s2):
    """Product over records of Gaussian densities, at 50 digits."""
    out = mp.mpf(1)
    for g, ri in zip(G, r):
        mu = mp.fsum(mp.mpf(a) * mp.mpf(b) for a, b in zip(g, gamma))
        out *= mp_gauss(ri, mu, s2)
    return out


def random_block(rng, n, L=4, P=2, M=3, label=None):
    return SiteBlock("s", rng.standard_normal((n, L)), rng.standard_normal(n), rng.standard_normal(P),
                     rng.standard_normal(M), label)


class TestLogit:
    def test_midpoint(self):
        assert logit_transform(0.5) == 0.0

    def test_upper_clamp(self):
        assert logit_transform(1.0) == pytest.approx(LOGIT_UPPER_CLAMP, rel=1e-14)
        assert logit_transform(0.0) == pytest.approx(-LOGIT_UPPER_CLAMP, rel=1e-14)

    def test_inverse_logit_of_minus_one(self):
        assert logit_transform(0.26894142) == pytest.approx(LOGIT_0_26894142, rel=1e-12)

    def test_out_of_range_rejected_with_id(self):
        with pytest.raises(ConfigError, match="rec-2"):
            logit_transform(np.array([0.2, 1.5]), ids=["rec-1", "rec-2"])


class TestLabeledSite:
    def test_zero_residual(self):
        g = np.array([[1.0, 2.0]])
        gamma = np.array([[0.5, 1.0], [0.25, -1.0]])
        r = g @ gamma[:, 0]
        blk = SiteBlock("a", g, r, [1.0], [0.0], label=0)
        assert loglik_labeled_site(blk, gamma, 0.3) == pytest.approx(-0.5 * np.log(2 * np.pi * 0.3), rel=1e-14)

    def test_unit_standardized_residuals(self):
        n, s2 = 7, 0.25
        G = np.ones((n, 1))
        r = np.where(np.arange(n) % 2, 1.0, -1.0) * np.sqrt(s2)
        blk = SiteBlock("a", G, r, [1.0], [0.0], label=0)
        want = -(n / 2) * np.log(2 * np.pi * s2) - n / 2
        assert loglik_labeled_site(blk, np.zeros((1, 2)), s2) == pytest.approx(want, rel=1e-14)

    def test_matches_extended_precision_sum(self):
        rng = np.random.default_rng(7)
        mp.mp.dps = 50
        for _ in range(10):
            blk = random_block(rng, 6, label=1)
            Gamma = rng.standard_normal((4, 3))
            s2 = rng.uniform(0.1, 2.0)
            want = mp.log(mp_site_density(blk.G, blk.r, Gamma[:, 1], s2))
            assert loglik_labeled_site(blk, Gamma, s2) == pytest.approx(float(want), rel=1e-10)

    def test_variance_matching_residuals_is_the_maximum(self):
        rng = np.random.default_rng(8)
        blk = random_block(rng, 40, label=0)
        Gamma = rng.standard_normal((4, 2))
        resid = blk.r - blk.G @ Gamma[:, 0]
        s_hat = np.mean(resid ** 2)
        grid = s_hat * np.exp(np.linspace(-1, 1, 41))
        vals = [loglik_labeled_site(blk, Gamma, s) for s in grid]
        assert int(np.argmax(vals)) == 20
        assert loglik_labeled_site(blk, Gamma, s_hat) >= max(vals) - 1e-12


class TestUnlabeledSite:
    def test_single_category_reduces_to_labeled(self):
        rng = np.random.default_rng(1)
        blk = random_block(rng, 5, label=0)
        Gamma = rng.standard_normal((4, 1))
        assert loglik_unlabeled_site(blk, [1.0], Gamma, 0.5) == pytest.approx(
            loglik_labeled_site(blk, Gamma, 0.5), abs=1e-12)

    def test_point_mass_equals_labeled(self):
        rng = np.random.default_rng(2)
        blk = random_block(rng, 5, label=0)
        Gamma = rng.standard_normal((4, 3))
        got = loglik_unlabeled_site(blk, [1.0, 0.0, 0.0], Gamma, 0.5)
        assert got == pytest.approx(loglik_labeled_site(blk, Gamma, 0.5), abs=1e-12)

    def test_matches_extended_precision_mixture(self):
        rng = np.random.default_rng(3)
        mp.mp.dps = 50
        for _ in range(10):
            blk = random_block(rng, 4)
            Gamma = rng.standard_normal((4, 3))
            p = rng.dirichlet(np.ones(3))
            s2 = rng.uniform(0.2, 1.5)
            want = mp.log(mp.fsum(mp.mpf(p[k]) * mp_site_density(blk.G, blk.r, Gamma[:, k], s2) for k in range(3)))
            assert loglik_unlabeled_site(blk, p, Gamma, s2) == pytest.approx(float(want), rel=1e-10)

    def test_all_zero_weights_rejected(self):
        rng = np.random.default_rng(4)
        blk = random_block(rng, 3)
        with pytest.raises(NumericalError):
            loglik_unlabeled_site(blk, [0.0, 0.0], rng.standard_normal((4, 2)), 1.0)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_mixture_bounded_by_best_component(self, seed):
        rng = np.random.default_rng(seed)
        blk = random_block(rng, 3)
        Gamma = rng.standard_normal((4, 3))
        p = rng.dirichlet(np.ones(3))
        per_k = [loglik_labeled_site(blk, Gamma, 0.7, label=k) for k in range(3)]
        got = loglik_unlabeled_site(blk, p, Gamma, 0.7)
        assert got <= max(per_k) + 1e-9
        assert got >= min(per_k) - 1e-9


def make_data(rng, n_lab=3, n_unl=4, L=4, M=3, P=2, K=3, n=5):
    lab = [SiteBlock(f"l{j}", rng.standard_normal((n, L)), rng.standard_normal(n), rng.standard_normal(P),
                     rng.standard_normal(M), j % K) for j in range(n_lab)]
    unl = [SiteBlock(f"u{j}", rng.standard_normal((n, L)), rng.standard_normal(n), rng.standard_normal(P),
                     rng.standard_normal(M)) for j in range(n_unl)]
    return PreparedData(lab, unl, L, M, P, K)


class TestTotal:
    def test_labeled_only(self):
        rng = np.random.default_rng(5)
        data = make_data(rng, n_unl=0)
        theta = sample_prior(PriorSpec(), {"L": 4, "M": 3, "P": 2, "K": 3}, rng)
        want = sum(loglik_labeled_site(b, theta.Gamma, theta.sigma2)
                   + np.log(cover_probabilities(b.x, b.h, theta.B, theta.Phi)[b.label]) for b in data.labeled)
        assert total_loglik(theta, data) == pytest.approx(want, rel=1e-12)

    def test_per_site_sums_to_total(self):
        rng = np.random.default_rng(6)
        data = make_data(rng)
        theta = sample_prior(PriorSpec(), {"L": 4, "M": 3, "P": 2, "K": 3}, rng)
        per = total_loglik(theta, data, per_site=True)
        assert len(per) == 7
        assert per.sum() == pytest.approx(total_loglik(theta, data), abs=1e-9)

    def test_dimension_mismatch_names_matrix(self):
        rng = np.random.default_rng(7)
        data = make_data(rng)
        theta = ParameterState.zeros(4, 5, 2, 3)
        with pytest.raises(ConfigError, match="Phi"):
            total_loglik(theta, data)

    def test_bad_label_rejected(self):
        rng = np.random.default_rng(8)
        blk = SiteBlock("x", rng.standard_normal((2, 2)), rng.standard_normal(2), [1.0], [0.0], label=3)
        with pytest.raises(ConfigError):
            PreparedData([blk], [], 2, 1, 1, 3)


class TestSiteStats:
    def test_gaussian_terms_match_records(self):
        rng = np.random.default_rng(9)
        data = make_data(rng)
        st_ = data.stats()
        Gamma, s2 = rng.standard_normal((4, 3)), 0.6
        got = st_.gaussian_loglik(Gamma, s2)
        for j, b in enumerate(data.blocks):
            for k in range(3):
                assert got[j, k] == pytest.approx(loglik_labeled_site(b, Gamma, s2, label=k), rel=1e-11)

    def test_incremental_accumulation_equals_batch(self):
        rng = np.random.default_rng(10)
        G, r = rng.standard_normal((9, 3)), rng.standard_normal(9)
        a = SiteStats.empty(["s"], 3, np.ones((1, 1)), np.ones((1, 1)))
        b = SiteStats.empty(["s"], 3, np.ones((1, 1)), np.ones((1, 1)))
        a.add_records(0, G, r)
        for lo in range(0, 9, 4):
            b.add_records(0, G[lo:lo + 4], r[lo:lo + 4])
        np.testing.assert_allclose(a.A, b.A, rtol=1e-13)
        np.testing.assert_allclose(a.b, b.b, rtol=1e-13)
        assert a.n[0] == b.n[0] == 9
