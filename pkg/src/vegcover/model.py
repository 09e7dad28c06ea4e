"""Parameter containers, priors, and the multinomial-logit cover-type map.

Categories are indexed ``0..K-1`` internally; the last one is the baseline
whose columns of ``B`` and ``Phi`` are pinned to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np
from scipy import special, stats

from .errors import ConfigError, NumericalError

LOG2PI = np.log(2.0 * np.pi)


@dataclass
class ParameterState:
    Gamma: np.ndarray  # L x K, reflectance-basis coefficients
    B: np.ndarray  # P x K, covariate effects
    Phi: np.ndarray  # M x K, spatial-basis coefficients
    sigma2: float

    def __post_init__(self):
        self.Gamma = np.array(self.Gamma, dtype=float, ndmin=2)
        self.B = np.array(self.B, dtype=float, ndmin=2)
        self.Phi = np.array(self.Phi, dtype=float, ndmin=2)
        self.sigma2 = float(self.sigma2)

    @property
    def dims(self) -> dict:
        return {"L": self.Gamma.shape[0], "M": self.Phi.shape[0], "P": self.B.shape[0], "K": self.Gamma.shape[1]}

    def validate(self):
        K = self.Gamma.shape[1]
        if self.B.shape[1] != K or self.Phi.shape[1] != K:
            raise ConfigError(f"column counts differ: Gamma {K}, B {self.B.shape[1]}, Phi {self.Phi.shape[1]}")
        if np.any(self.B[:, -1] != 0) or np.any(self.Phi[:, -1] != 0):
            raise ConfigError("baseline columns of B and Phi must be zero")
        if not self.sigma2 > 0:
            raise ConfigError(f"sigma2 must be positive, got {self.sigma2}")
        for name in ("Gamma", "B", "Phi"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NumericalError(f"{name} has non-finite entries")
        return self

    def copy(self) -> "ParameterState":
        return ParameterState(self.Gamma.copy(), self.B.copy(), self.Phi.copy(), self.sigma2)

    @classmethod
    def zeros(cls, L, M, P, K, sigma2=1.0):
        return cls(np.zeros((L, K)), np.zeros((P, K)), np.zeros((M, K)), sigma2)


@dataclass(frozen=True)
class PriorSpec:
    """Prior hyperparameters.

    Scales are variances.  ``sigma2`` has a Gamma prior in the shape-rate
    parameterization (mean ``shape / rate``).
    """

    rho: float = 0.9
    gamma_scale: float = 0.05
    phi_scale: float = 0.1
    beta_scale: float = 1.0
    sigma2_shape: float = 12.0
    sigma2_rate: float = 30.0

    def __post_init__(self):
        for f in fields(self):
            if f.name != "rho" and not getattr(self, f.name) > 0:
                raise ConfigError(f"prior.{f.name} must be positive")

    def sigma_gamma(self, K: int) -> np.ndarray:
        return sigma_gamma(K, self.rho)

    def gamma_covariance(self, K: int) -> np.ndarray:
        """Covariance of one row of Gamma; raises if not positive definite."""
        cov = self.gamma_scale * self.sigma_gamma(K)
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ConfigError(
                f"rho = {self.rho} gives a non positive definite Sigma_gamma for K = {K}; "
                f"need {-1.0 / (K - 1) if K > 1 else '-inf'} < rho < 1"
            ) from None
        return cov

    def with_updates(self, **kw) -> "PriorSpec":
        return replace(self, **kw)


def sigma_gamma(K: int, rho: float) -> np.ndarray:
    return rho * np.ones((K, K)) + (1.0 - rho) * np.eye(K)


def linear_predictors(X, H, B, Phi) -> np.ndarray:
    """``log eta = X B + H Phi`` for each row; works for a single site too."""
    return np.asarray(X, dtype=float) @ B + np.asarray(H, dtype=float) @ Phi


def log_cover_probabilities(X, H, B, Phi) -> np.ndarray:
    eta = linear_predictors(X, H, B, Phi)
    if not np.all(np.isfinite(eta)):
        bad = np.argwhere(~np.isfinite(np.atleast_2d(eta)))[0]
        raise NumericalError(f"non-finite linear predictor for category k = {bad[-1]}")
    return eta - special.logsumexp(eta, axis=-1, keepdims=True)


def cover_probabilities(x_j, h_j, B, Phi) -> np.ndarray:
    """Cover-type simplex ``p_j`` for one site (or row-wise for matrices).

    Evaluated as a max-shifted softmax so linear predictors of magnitude
    several hundred do not overflow.
    """
    return np.exp(log_cover_probabilities(x_j, h_j, B, Phi))


def log_prior_components(theta: ParameterState, prior: PriorSpec) -> dict:
    """Per-block prior log densities: gamma, phi, beta, sigma2."""
    K = theta.Gamma.shape[1]
    cov = prior.gamma_covariance(K)
    chol = np.linalg.cholesky(cov)
    z = np.linalg.solve(chol, theta.Gamma.T)  # K x L
    L = theta.Gamma.shape[0]
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    lp_gamma = -0.5 * np.sum(z * z) - 0.5 * L * (K * LOG2PI + logdet)

    def iid_normal(values, var):
        return -0.5 * np.sum(values * values) / var - 0.5 * values.size * (LOG2PI + np.log(var))

    lp_phi = iid_normal(theta.Phi[:, :-1], prior.phi_scale)
    lp_beta = iid_normal(theta.B[:, :-1], prior.beta_scale)
    if theta.sigma2 > 0:
        lp_sigma2 = float(stats.gamma.logpdf(theta.sigma2, prior.sigma2_shape, scale=1.0 / prior.sigma2_rate))
    else:
        lp_sigma2 = -np.inf
    return {"gamma": float(lp_gamma), "phi": float(lp_phi), "beta": float(lp_beta), "sigma2": lp_sigma2}


def log_prior(theta: ParameterState, prior: PriorSpec) -> float:
    """Joint prior log density; ``-inf`` when ``sigma2 <= 0``."""
    if not theta.sigma2 > 0:
        return -np.inf
    return float(sum(log_prior_components(theta, prior).values()))


def sample_prior(prior: PriorSpec, dims: dict, rng: np.random.Generator) -> ParameterState:
    L, M, P, K = (int(dims[k]) for k in ("L", "M", "P", "K"))
    if min(L, M, P) < 1 or K < 2:
        raise ConfigError(f"invalid dimensions {dims}")
    chol = np.linalg.cholesky(prior.gamma_covariance(K))
    Gamma = rng.standard_normal((L, K)) @ chol.T
    B = np.zeros((P, K))
    B[:, :-1] = rng.normal(0.0, np.sqrt(prior.beta_scale), (P, K - 1))
    Phi = np.zeros((M, K))
    Phi[:, :-1] = rng.normal(0.0, np.sqrt(prior.phi_scale), (M, K - 1))
    sigma2 = rng.gamma(prior.sigma2_shape, 1.0 / prior.sigma2_rate)
    return ParameterState(Gamma, B, Phi, sigma2)
