"""Logit reflectance likelihood for labeled and unlabeled sites.

A labeled site contributes its Gaussian reflectance terms under the observed
cover type plus ``log p_{j, y_j}``.  An unlabeled site contributes the
marginal over its cover type,

    log sum_k p_jk prod_i N(r_ij; g_ij' gamma_k, sigma2),

where every record at the site shares the same latent label.  Per-site
Gram statistics (``G'G``, ``G'r``, ``r'r``, ``N``) give the same Gaussian
terms without touching individual records, which is what the sampler and the
streaming predictor use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, NumericalError
from .model import LOG2PI, ParameterState, log_cover_probabilities

EPS = 1e-6


def logit_transform(raw, eps: float = EPS, ids=None):
    """``log(z / (1 - z))`` after clamping ``z`` to ``[eps, 1 - eps]``."""
    z = np.asarray(raw, dtype=float)
    bad = ~((z >= 0.0) & (z <= 1.0))
    if np.any(bad):
        where = np.flatnonzero(np.atleast_1d(bad))
        if ids is not None:
            where = np.asarray(ids)[where]
        raise ConfigError(f"reflectance outside [0, 1] for record(s): {', '.join(map(str, where[:10]))}")
    # clamp on the logit scale: same as clamping z (logit is monotone) but the
    # bound is computed without the cancellation in 1 - (1 - eps)
    bound = np.log1p(-eps) - np.log(eps)
    with np.errstate(divide="ignore"):
        out = np.log(z) - np.log1p(-z)
    return np.clip(out, -bound, bound)


@dataclass
class SiteBlock:
    """Reflectance records of one site.

    ``label`` is the 0-based cover type, or None when unobserved.
    """

    site_id: str
    G: np.ndarray  # N_j x L
    r: np.ndarray  # N_j logit reflectances
    x: np.ndarray  # P covariates
    h: np.ndarray  # M spatial basis values
    label: int | None = None

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float).ravel()
        self.G = np.asarray(self.G, dtype=float)
        if self.G.ndim != 2 or len(self.G) != len(self.r):
            raise ConfigError(f"site {self.site_id}: G must have one row per record")
        self.x = np.asarray(self.x, dtype=float).ravel()
        self.h = np.asarray(self.h, dtype=float).ravel()

    @property
    def n(self) -> int:
        return len(self.r)


@dataclass
class PreparedData:
    labeled: list = field(default_factory=list)
    unlabeled: list = field(default_factory=list)
    L: int = 0
    M: int = 0
    P: int = 0
    K: int = 0

    def __post_init__(self):
        for b in self.labeled:
            if b.label is None or not 0 <= b.label < self.K:
                raise ConfigError(f"site {b.site_id}: label {b.label} outside 0..{self.K - 1}")
        for b in list(self.labeled) + list(self.unlabeled):
            if b.G.shape[1] != self.L and b.n:
                raise ConfigError(f"G for site {b.site_id} has {b.G.shape[1]} columns, expected L = {self.L}")
            if b.x.size != self.P:
                raise ConfigError(f"X row for site {b.site_id} has {b.x.size} entries, expected P = {self.P}")
            if b.h.size != self.M:
                raise ConfigError(f"H row for site {b.site_id} has {b.h.size} entries, expected M = {self.M}")

    @property
    def blocks(self) -> list:
        return list(self.labeled) + list(self.unlabeled)

    @property
    def n_records(self) -> int:
        return sum(b.n for b in self.blocks)

    def stats(self) -> "SiteStats":
        if not self.blocks:
            return SiteStats.empty([], self.L, np.zeros((0, self.P)), np.zeros((0, self.M)))
        return SiteStats.from_blocks(self.blocks, self.L)


def _gauss_logpdf(r, mean, sigma2):
    return -0.5 * (LOG2PI + np.log(sigma2)) - 0.5 * (r - mean) ** 2 / sigma2


def record_loglik(block: SiteBlock, Gamma, sigma2) -> np.ndarray:
    """Per-record, per-category Gaussian log densities (N_j x K)."""
    mu = block.G @ Gamma if block.n else np.zeros((0, Gamma.shape[1]))
    return _gauss_logpdf(block.r[:, None], mu, sigma2)


def loglik_labeled_site(block: SiteBlock, Gamma, sigma2, label: int | None = None) -> float:
    k = block.label if label is None else label
    if block.n == 0:
        return 0.0
    mu = block.G @ Gamma[:, k]
    return float(np.sum(_gauss_logpdf(block.r, mu, sigma2)))


def loglik_unlabeled_site(block: SiteBlock, p_j, Gamma, sigma2) -> float:
    """Site-level mixture log density; categories with ``p_jk == 0`` are skipped."""
    p_j = np.asarray(p_j, dtype=float)
    keep = p_j > 0
    if not keep.any():
        raise NumericalError(f"site {block.site_id}: all mixture weights are zero")
    per_k = record_loglik(block, Gamma, sigma2).sum(axis=0)
    return float(logsumexp(np.log(p_j[keep]) + per_k[keep]))


def _check_dims(theta: ParameterState, data: PreparedData):
    d = theta.dims
    for name, key in (("Gamma", "L"), ("B", "P"), ("Phi", "M")):
        if d[key] != getattr(data, key):
            raise ConfigError(f"{name} has {d[key]} rows but data has {key} = {getattr(data, key)}")
    if d["K"] != data.K:
        raise ConfigError(f"Gamma has {d['K']} columns but data has K = {data.K}")


def total_loglik(theta: ParameterState, data: PreparedData, per_site: bool = False):
    """Log likelihood over all fitting sites, labeled first then unlabeled.

    With ``per_site=True`` returns the array of site contributions instead
    of their sum.
    """
    _check_dims(theta, data)
    out = []
    for b in data.labeled:
        logp = log_cover_probabilities(b.x, b.h, theta.B, theta.Phi)
        out.append(loglik_labeled_site(b, theta.Gamma, theta.sigma2) + logp[b.label])
    for b in data.unlabeled:
        p = np.exp(log_cover_probabilities(b.x, b.h, theta.B, theta.Phi))
        out.append(loglik_unlabeled_site(b, p, theta.Gamma, theta.sigma2))
    out = np.array(out, dtype=float)
    return out if per_site else float(np.sum(out))


@dataclass
class SiteStats:
    """Per-site sufficient statistics of the reflectance records.

    ``labels`` holds the 0-based cover type or -1 for unlabeled sites.
    """

    site_ids: np.ndarray
    A: np.ndarray  # J x L x L, G'G
    b: np.ndarray  # J x L, G'r
    c: np.ndarray  # J, r'r
    n: np.ndarray  # J, record counts
    X: np.ndarray
    H: np.ndarray
    labels: np.ndarray

    @classmethod
    def empty(cls, site_ids: Sequence, L: int, X, H, labels=None) -> "SiteStats":
        J = len(site_ids)
        labels = np.full(J, -1, dtype=int) if labels is None else np.asarray(labels, dtype=int)
        return cls(
            np.asarray(site_ids, dtype=object),
            np.zeros((J, L, L)),
            np.zeros((J, L)),
            np.zeros(J),
            np.zeros(J, dtype=np.int64),
            np.asarray(X, dtype=float).reshape(J, np.shape(X)[-1]),
            np.asarray(H, dtype=float).reshape(J, np.shape(H)[-1]),
            labels,
        )

    @classmethod
    def from_blocks(cls, blocks: Sequence[SiteBlock], L: int) -> "SiteStats":
        out = cls.empty(
            [b.site_id for b in blocks],
            L,
            np.array([b.x for b in blocks]).reshape(len(blocks), -1),
            np.array([b.h for b in blocks]).reshape(len(blocks), -1),
            [(-1 if b.label is None else b.label) for b in blocks],
        )
        for j, blk in enumerate(blocks):
            out.add_records(j, blk.G, blk.r)
        return out

    def add_records(self, j: int, G, r):
        G = np.asarray(G, dtype=float)
        r = np.asarray(r, dtype=float)
        if len(r) == 0:
            return
        self.A[j] += G.T @ G
        self.b[j] += G.T @ r
        self.c[j] += r @ r
        self.n[j] += len(r)

    def subset(self, idx) -> "SiteStats":
        idx = np.asarray(idx, dtype=int)
        return SiteStats(self.site_ids[idx], self.A[idx], self.b[idx], self.c[idx], self.n[idx],
                         self.X[idx], self.H[idx], self.labels[idx])

    def __len__(self):
        return len(self.c)

    def sum_squares(self, Gamma) -> np.ndarray:
        """``sum_i (r_ij - g_ij' gamma_k)^2`` for every site and category (J x K)."""
        AG = np.einsum("jab,bk->jak", self.A, Gamma)
        q = self.c[:, None] - 2.0 * self.b @ Gamma + np.einsum("jak,ak->jk", AG, Gamma)
        return np.maximum(q, 0.0)

    def gaussian_loglik(self, Gamma, sigma2) -> np.ndarray:
        return -0.5 * self.n[:, None] * (LOG2PI + np.log(sigma2)) - 0.5 * self.sum_squares(Gamma) / sigma2
