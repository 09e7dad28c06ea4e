"""Synthetic landscapes, cover types, and reflectances for method checks.

The default scenario is a 24 x 24 site grid on the unit square with three
cover types, an intercept plus two Gaussian-process covariates (one
continuous, one thresholded to binary), 12 labeled sites per cover type, and
reflectances on a 6 wavelength x 12 date grid.  True parameters are drawn
from the model prior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import expit

from .basis import TPSBasis, fit_tps_basis
from .errors import ConfigError, NumericalError
from .model import ParameterState, PriorSpec, cover_probabilities, sample_prior


@dataclass
class SyntheticScenario:
    grid_size: int = 24
    gp_range: float = 0.3
    gp_variance: float = 1.0
    binary_threshold: float = 0.0
    wavelength_count: int = 6
    date_count: int = 12
    n_obs_per_type: int = 12
    K: int = 3
    L: int = 30
    M: int = 30
    seed: int = 2023
    wavelength_start: float = 400.0
    wavelength_step: float = 300.0
    day_start: int = 15
    day_step: int = 30
    prior: PriorSpec = field(default_factory=PriorSpec)

    def __post_init__(self):
        if self.grid_size < 2:
            raise ConfigError("grid_size must be >= 2")
        for name in ("wavelength_count", "date_count", "K", "L", "M"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.n_obs_per_type < 0:
            raise ConfigError("n_obs_per_type must be >= 0")
        if self.gp_range <= 0 or self.gp_variance <= 0:
            raise ConfigError("GP range and variance must be positive")

    def site_coords(self) -> np.ndarray:
        g = np.linspace(0.0, 1.0, self.grid_size)
        gx, gy = np.meshgrid(g, g, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])

    def reflectance_grid(self) -> np.ndarray:
        """(wavelength_nm, day_of_year) pairs, wavelength-major."""
        w = self.wavelength_start + self.wavelength_step * np.arange(self.wavelength_count)
        d = self.day_start + self.day_step * np.arange(self.date_count)
        gw, gd = np.meshgrid(w, d, indexing="ij")
        return np.column_stack([gw.ravel(), gd.ravel()])

    def reflectance_bounds(self) -> np.ndarray:
        """Nominal ``[lo, hi]`` per grid axis; a single-value axis spans one step."""
        w_hi = self.wavelength_start + self.wavelength_step * max(self.wavelength_count - 1, 1)
        d_hi = self.day_start + self.day_step * max(self.date_count - 1, 1)
        return np.array([[self.wavelength_start, w_hi], [self.day_start, d_hi]], dtype=float)


@dataclass
class SyntheticData:
    scenario: SyntheticScenario
    coords: np.ndarray  # J x 2
    X: np.ndarray  # J x 3, intercept first
    H: np.ndarray  # J x M
    spatial_basis: TPSBasis
    reflectance_basis: TPSBasis
    grid: np.ndarray  # n_grid x 2 (wavelength, day)
    G: np.ndarray  # n_grid x L
    truth: ParameterState
    labels: np.ndarray  # J, 0-based
    observed: np.ndarray  # sorted indices of labeled sites
    logit_reflectance: np.ndarray  # J x n_grid

    @property
    def reflectance(self) -> np.ndarray:
        return expit(self.logit_reflectance)


def exponential_covariance(points, range_, variance) -> np.ndarray:
    return variance * np.exp(-cdist(points, points) / range_)


def sample_gp_exponential(points, range_, variance, rng, size=None) -> np.ndarray:
    """Mean-zero Gaussian-process draw(s) with ``C(d) = variance exp(-d / range)``.

    Returns an array shaped ``(n,)`` or ``(size, n)``.
    """
    if range_ <= 0 or variance <= 0:
        raise ConfigError("GP range and variance must be positive")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    cov = exponential_covariance(pts, range_, variance)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        try:
            chol = np.linalg.cholesky(cov + 1e-10 * np.eye(len(pts)))
        except np.linalg.LinAlgError:
            raise NumericalError("GP covariance is not positive definite even with jitter") from None
    shape = (len(pts),) if size is None else (size, len(pts))
    z = rng.standard_normal(shape)
    return z @ chol.T


def make_synthetic_covariates(coords, scenario: SyntheticScenario, rng) -> np.ndarray:
    """Intercept, a centred/scaled GP field, and a thresholded GP field."""
    f1 = sample_gp_exponential(coords, scenario.gp_range, scenario.gp_variance, rng)
    f2 = sample_gp_exponential(coords, scenario.gp_range, scenario.gp_variance, rng)
    x1 = (f1 - f1.mean()) / f1.std(ddof=1)
    x2 = (f2 - f2.mean() > scenario.binary_threshold).astype(float)
    return np.column_stack([np.ones(len(x1)), x1, x2])


def simulate_covertypes(X, H, B, Phi, rng) -> np.ndarray:
    p = cover_probabilities(X, H, B, Phi)
    u = rng.random(len(p))
    labels = (u[:, None] > np.cumsum(p, axis=1)).sum(axis=1)
    return np.minimum(labels, p.shape[1] - 1)


def select_observed_sites(labels, n_per_type, K, rng) -> np.ndarray:
    """``n_per_type`` sites of each cover type, uniformly without replacement."""
    labels = np.asarray(labels)
    chosen = []
    for k in range(K):
        pool = np.flatnonzero(labels == k)
        if len(pool) < n_per_type:
            raise ConfigError(f"cover type {k + 1} has {len(pool)} sites, fewer than {n_per_type}")
        chosen.append(rng.choice(pool, size=n_per_type, replace=False))
    return np.sort(np.concatenate(chosen)).astype(int)


def simulate_reflectances(labels, Gamma, sigma2, G, rng) -> np.ndarray:
    """Logit reflectances ``J x n_grid``: surface of each site's type plus noise."""
    mu = (G @ Gamma)[:, np.asarray(labels)].T
    if sigma2 == 0:
        return mu
    return mu + np.sqrt(sigma2) * rng.standard_normal(mu.shape)


def simulate(scenario: SyntheticScenario | None = None) -> SyntheticData:
    """Generate a full synthetic data set; identical scenarios give identical output."""
    sc = scenario or SyntheticScenario()
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(sc.seed).spawn(5)]
    rng_cov, rng_par, rng_lab, rng_obs, rng_ref = streams
    coords = sc.site_coords()
    X = make_synthetic_covariates(coords, sc, rng_cov)
    spatial = fit_tps_basis(coords, sc.M)
    H = spatial.evaluate(coords).values
    grid = sc.reflectance_grid()
    refl = fit_tps_basis(grid, sc.L, bounds=sc.reflectance_bounds())
    G = refl.evaluate(grid).values
    dims = {"L": sc.L, "M": sc.M, "P": X.shape[1], "K": sc.K}
    truth = sample_prior(sc.prior, dims, rng_par)
    labels = simulate_covertypes(X, H, truth.B, truth.Phi, rng_lab)
    observed = select_observed_sites(labels, sc.n_obs_per_type, sc.K, rng_obs)
    r = simulate_reflectances(labels, truth.Gamma, truth.sigma2, G, rng_ref)
    return SyntheticData(sc, coords, X, H, spatial, refl, grid, G, truth, labels, observed, r)
