"""Cover-type prediction from posterior draws.

``predict_marginal`` averages, over draws, each site's conditional cover-type
distribution given its own reflectances::

    u_k(theta, j) ∝ p_jk(theta) * prod_i N(r_ij; g_ij' gamma_k, sigma2)

Sites are processed in chunks and draws in batches; the Gaussian terms come
from per-site Gram statistics, so the reflectance records themselves are
touched only once, when the statistics are accumulated.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError
from .likelihood import SiteBlock, SiteStats
from .model import LOG2PI
from .sampler import PosteriorDraws

MAX_ASSIGNMENTS = 10**6
SITE_CHUNK = 256
DRAW_BATCH = 250


@dataclass
class SitePrediction:
    site_id: str
    y_posterior: np.ndarray
    y_mode: int  # 0-based
    suitability_mean: np.ndarray
    suitability_lower: np.ndarray
    suitability_upper: np.ndarray
    n_records: int = 0
    flags: tuple = field(default_factory=tuple)


def _as_stats(sites, L) -> SiteStats:
    if isinstance(sites, SiteStats):
        return sites
    return SiteStats.from_blocks(list(sites), L)


def site_draw_terms(draws: PosteriorDraws, stats: SiteStats):
    """Log cover probabilities and Gaussian site log likelihoods per draw.

    Returns two ``J x T x K`` arrays ``(logp, S)``.
    """
    T = len(draws)
    J = len(stats)
    _, L, K = draws.Gamma.shape
    eta = np.einsum("jp,tpk->jtk", stats.X, draws.B) + np.einsum("jm,tmk->jtk", stats.H, draws.Phi)
    m = eta.max(axis=2, keepdims=True)
    logp = eta - (m + np.log(np.exp(eta - m).sum(axis=2, keepdims=True)))
    S = np.empty((J, T, K))
    A_flat = stats.A.reshape(J, L * L)
    for lo in range(0, T, DRAW_BATCH):
        G = draws.Gamma[lo:lo + DRAW_BATCH]  # t x L x K
        tb = G.shape[0]
        outer = np.einsum("tak,tbk->abtk", G, G).reshape(L * L, tb * K)
        quad = (A_flat @ outer).reshape(J, tb, K)
        lin = (stats.b @ G.transpose(1, 0, 2).reshape(L, tb * K)).reshape(J, tb, K)
        Q = np.maximum(stats.c[:, None, None] - 2.0 * lin + quad, 0.0)
        s2 = draws.sigma2[lo:lo + DRAW_BATCH]
        S[:, lo:lo + tb, :] = (-0.5 * stats.n[:, None, None] * (LOG2PI + np.log(s2))[None, :, None]
                               - 0.5 * Q / s2[None, :, None])
    return logp, S


def _softmax(a, axis=-1):
    m = a.max(axis=axis, keepdims=True)
    e = np.exp(a - m)
    return e / e.sum(axis=axis, keepdims=True)


def _predict_chunk(draws, stats):
    logp, S = site_draw_terms(draws, stats)
    u = _softmax(logp + S, axis=2)
    if not np.all(np.abs(u.sum(axis=2) - 1.0) <= 1e-12):
        raise AssertionError("cover-type weights do not form a simplex")
    p = np.exp(logp)
    y_post = u.mean(axis=1)
    y_post /= y_post.sum(axis=1, keepdims=True)
    p_mean = p.mean(axis=1)
    p_mean /= p_mean.sum(axis=1, keepdims=True)
    lower, upper = np.quantile(p, [0.025, 0.975], axis=1)
    out = []
    for j in range(len(stats)):
        flags = ("no_reflectance",) if stats.n[j] == 0 else ()
        out.append(SitePrediction(
            site_id=stats.site_ids[j],
            y_posterior=y_post[j],
            y_mode=int(np.argmax(y_post[j])),
            suitability_mean=p_mean[j],
            suitability_lower=lower[j],
            suitability_upper=upper[j],
            n_records=int(stats.n[j]),
            flags=flags,
        ))
    return out


def predict_marginal(draws: PosteriorDraws, sites, stride: int = 1, threads: int = 1) -> list:
    """Approximate marginal posterior of cover type at each site.

    ``sites`` is a :class:`SiteStats` or a sequence of :class:`SiteBlock`.
    Output order follows the input order regardless of ``threads``.
    """
    if len(draws) == 0:
        raise ConfigError("no posterior draws")
    if stride < 1:
        raise ConfigError("prediction stride must be >= 1")
    draws = draws.stride(stride) if stride > 1 else draws
    stats = _as_stats(sites, draws.dims["L"])
    chunks = [np.arange(lo, min(lo + SITE_CHUNK, len(stats))) for lo in range(0, len(stats), SITE_CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda idx: _predict_chunk(draws, stats.subset(idx)), chunks))
    else:
        parts = [_predict_chunk(draws, stats.subset(idx)) for idx in chunks]
    return [p for part in parts for p in part]


@dataclass
class JointTable:
    assignments: np.ndarray  # n_assign x J, 0-based labels
    probabilities: np.ndarray  # n_assign
    marginals: np.ndarray  # J x K


def predict_exact_joint(draws: PosteriorDraws, sites) -> JointTable:
    """Joint posterior over every label assignment of the given sites.

    Each draw's weights are normalized over the full ``K^J`` sample space and
    then averaged over draws.  Refuses when ``K^J`` exceeds 10^6.
    """
    K = draws.dims["K"]
    if not isinstance(sites, SiteStats):
        sites = list(sites)
    J = len(sites)
    n_assign = K ** J
    if n_assign > MAX_ASSIGNMENTS:
        raise ConfigError(f"joint enumeration needs {n_assign} assignments (K^J = {K}^{J}), limit {MAX_ASSIGNMENTS}")
    if J == 0:
        return JointTable(np.zeros((1, 0), dtype=int), np.ones(1), np.zeros((0, K)))
    stats = _as_stats(sites, draws.dims["L"])
    logp, S = site_draw_terms(draws, stats)
    a = logp + S  # J x T x K
    assign = np.array(list(itertools.product(range(K), repeat=J)), dtype=int)
    logw = np.zeros((len(draws), n_assign))
    for j in range(J):
        logw += a[j][:, assign[:, j]]
    w = _softmax(logw, axis=1).mean(axis=0)
    marg = np.zeros((J, K))
    for j in range(J):
        for k in range(K):
            marg[j, k] = w[assign[:, j] == k].sum()
    return JointTable(assign, w, marg)


@dataclass
class CurveTable:
    covariate_index: int
    grid: np.ndarray
    mean: np.ndarray  # G x K
    lower: np.ndarray
    upper: np.ndarray

    def to_frame(self, values=None) -> pd.DataFrame:
        values = self.grid if values is None else np.asarray(values)
        G, K = self.mean.shape
        return pd.DataFrame({
            "value": np.repeat(values, K),
            "cover_type": np.tile(np.arange(1, K + 1), G),
            "mean": self.mean.ravel(),
            "lower95": self.lower.ravel(),
            "upper95": self.upper.ravel(),
        })


def curve_probabilities(draws: PosteriorDraws, covariate_index: int, grid, x_reference) -> np.ndarray:
    """``T x G x K`` cover probabilities along one covariate, spatial effect 0."""
    grid = np.asarray(grid, dtype=float).ravel()
    x = np.tile(np.asarray(x_reference, dtype=float), (len(grid), 1))
    x[:, covariate_index] = grid
    eta = np.einsum("gp,tpk->tgk", x, draws.B)
    return _softmax(eta, axis=2)


def marginal_probability_curves(draws: PosteriorDraws, covariate_index: int, grid, x_reference) -> CurveTable:
    P = draws.dims["P"]
    if not 0 <= covariate_index < P:
        raise ConfigError(f"covariate index {covariate_index} outside 0..{P - 1}")
    grid = np.asarray(grid, dtype=float).ravel()
    if not np.all(np.isfinite(grid)):
        raise ConfigError("curve grid must be finite")
    p = curve_probabilities(draws, covariate_index, grid, x_reference)
    lower, upper = np.quantile(p, [0.025, 0.975], axis=0)
    return CurveTable(covariate_index, grid, p.mean(axis=0), lower, upper)


def summarize_B(draws: PosteriorDraws, covariate_names=None) -> pd.DataFrame:
    """Quantiles of every entry of B (the baseline column is all zeros)."""
    T, P, K = draws.B.shape
    if T == 0:
        raise ConfigError("no posterior draws")
    names = covariate_names or [f"x{p + 1}" for p in range(P)]
    levels = [0.025, 0.25, 0.5, 0.75, 0.975]
    q = np.quantile(draws.B, levels, axis=0)  # 5 x P x K
    rows = []
    for p in range(P):
        for k in range(K):
            row = {"covariate": names[p], "cover_type": k + 1}
            for lev, col in zip(levels, ("q025", "q25", "median", "q75", "q975")):
                row[col] = 0.0 if k == K - 1 else float(q[levels.index(lev), p, k])
            rows.append(row)
    return pd.DataFrame(rows)
