"""Univariate slice-sampling MCMC over all free model parameters.

Each sweep visits every free scalar of ``Gamma``, ``B[:, :K-1]``,
``Phi[:, :K-1]`` and ``log sigma2`` once (Neal's stepping-out and shrinkage
procedure).  Site-level Gram statistics are cached together with the
per-site, per-category sums of squares and linear predictors, so one
evaluation of a scalar's full conditional costs O(J K) regardless of how
many reflectance records each site holds.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigError, NumericalError
from .likelihood import PreparedData, SiteStats
from .model import LOG2PI, ParameterState, PriorSpec, log_prior

log = logging.getLogger(__name__)


class DegenerateTraceWarning(UserWarning):
    """A trace has zero variance, so its effective sample size is 0."""


class LowESSWarning(UserWarning):
    pass


@dataclass
class ChainConfig:
    n_burnin: int = 1000
    n_keep: int = 1000
    thin: int = 1
    seed: int = 0
    width_coef: float = 0.5
    width_logsigma2: float = 0.5
    max_stepout: int = 100
    scan_order: str = "random"  # or "fixed"
    adapt: bool = True
    factor_updates: bool = True
    width_direction: float = 2.0
    deterministic_reduction: bool = True

    def __post_init__(self):
        if self.n_burnin < 0 or self.n_keep < 1 or self.thin < 1:
            raise ConfigError("mcmc: need n_burnin >= 0, n_keep >= 1, thin >= 1")
        if min(self.width_coef, self.width_logsigma2, self.width_direction) <= 0 or self.max_stepout < 1:
            raise ConfigError("mcmc: slice widths and max_stepout must be positive")
        if self.scan_order not in ("random", "fixed"):
            raise ConfigError(f"mcmc.scan_order must be 'random' or 'fixed', got {self.scan_order!r}")


class PosteriorDraws:
    """Retained draws stacked along a leading axis."""

    def __init__(self, Gamma, B, Phi, sigma2):
        self.Gamma = np.asarray(Gamma, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.Phi = np.asarray(Phi, dtype=float)
        self.sigma2 = np.asarray(sigma2, dtype=float).ravel()

    @classmethod
    def from_states(cls, states) -> "PosteriorDraws":
        states = list(states)
        if not states:
            raise ConfigError("no draws")
        return cls(
            np.stack([s.Gamma for s in states]),
            np.stack([s.B for s in states]),
            np.stack([s.Phi for s in states]),
            np.array([s.sigma2 for s in states]),
        )

    def __len__(self):
        return len(self.sigma2)

    def __getitem__(self, t) -> ParameterState:
        return ParameterState(self.Gamma[t], self.B[t], self.Phi[t], self.sigma2[t])

    def __iter__(self):
        return (self[t] for t in range(len(self)))

    def stride(self, step: int) -> "PosteriorDraws":
        return PosteriorDraws(self.Gamma[::step], self.B[::step], self.Phi[::step], self.sigma2[::step])

    @property
    def dims(self) -> dict:
        _, L, K = self.Gamma.shape
        return {"L": L, "M": self.Phi.shape[1], "P": self.B.shape[1], "K": K}

    def flat(self) -> tuple[list, np.ndarray]:
        """Column names and a ``T x n_params`` matrix of all entries."""
        names, cols = [], []
        for sym, arr in (("Gamma", self.Gamma), ("B", self.B), ("Phi", self.Phi)):
            _, rows, K = arr.shape
            for i in range(rows):
                for k in range(K):
                    names.append(f"{sym}[{i + 1},{k + 1}]")
                    cols.append(arr[:, i, k])
        names.append("sigma2")
        cols.append(self.sigma2)
        return names, np.column_stack(cols)

    @classmethod
    def from_flat(cls, names, values, dims) -> "PosteriorDraws":
        values = np.asarray(values, dtype=float).reshape(-1, len(names))
        T = values.shape[0]
        L, M, P, K = (dims[k] for k in ("L", "M", "P", "K"))
        col = {n: i for i, n in enumerate(names)}
        out = {}
        for sym, rows in (("Gamma", L), ("B", P), ("Phi", M)):
            arr = np.empty((T, rows, K))
            for i in range(rows):
                for k in range(K):
                    arr[:, i, k] = values[:, col[f"{sym}[{i + 1},{k + 1}]"]]
            out[sym] = arr
        return cls(out["Gamma"], out["B"], out["Phi"], values[:, col["sigma2"]])


@dataclass
class ChainOutput:
    draws: PosteriorDraws
    logpost_trace: np.ndarray
    ess: dict
    timings: dict = field(default_factory=dict)
    widths: dict = field(default_factory=dict)


def slice_update_scalar(log_target, current, width, max_stepout, rng, current_logp=None):
    """One stepping-out/shrinkage slice-sampling transition.

    Returns ``(new_value, log_target(new_value))``.
    """
    x0 = float(current)
    f0 = log_target(x0) if current_logp is None else current_logp
    if not np.isfinite(f0):
        raise NumericalError(f"log target is not finite at the current value {x0}")
    level = f0 - rng.exponential()
    left = x0 - width * rng.random()
    right = left + width
    j = int(np.floor(max_stepout * rng.random()))
    k = max_stepout - 1 - j
    while j > 0 and log_target(left) > level:
        left -= width
        j -= 1
    while k > 0 and log_target(right) > level:
        right += width
        k -= 1
    while True:
        x1 = left + (right - left) * rng.random()
        f1 = log_target(x1)
        if f1 > level:
            assert f1 >= level
            return x1, f1
        if x1 < x0:
            left = x1
        elif x1 > x0:
            right = x1
        else:
            raise NumericalError("slice shrank to the current point without acceptance")


def _autocorr(x):
    n = len(x)
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov / acov[0]


def effective_sample_size(trace) -> float:
    """Geyer's initial-positive-sequence estimate of the effective sample size.

    A constant trace returns 0.0 and emits :class:`DegenerateTraceWarning`.
    """
    x = np.asarray(trace, dtype=float).ravel()
    n = len(x)
    if n < 10:
        raise ConfigError(f"trace too short for ESS ({n} < 10)")
    if np.ptp(x) == 0 or np.var(x) == 0:
        warnings.warn("constant trace", DegenerateTraceWarning, stacklevel=2)
        return 0.0
    rho = _autocorr(x)
    tau = -1.0
    for m in range(n // 2):
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(min(n, n / max(tau, 1e-12)))


def _lse_rows(T):
    if T.shape[0] == 0:
        return np.zeros(0)
    m = T.max(axis=1)
    return m + np.log(np.exp(T - m[:, None]).sum(axis=1))


# Log-likelihood kernels.  Sites are ordered labeled first; ``lab_y`` holds
# the labels of the leading rows and the remaining rows are unlabeled.

@njit(cache=True)
def _site_term(row_s, row_lp, y):
    if y >= 0:
        return row_s[y] + row_lp[y]
    m = -np.inf
    for k in range(row_s.shape[0]):
        v = row_s[k] + row_lp[k]
        if v > m:
            m = v
    acc = 0.0
    for k in range(row_s.shape[0]):
        acc += np.exp(row_s[k] + row_lp[k] - m)
    return m + np.log(acc)


@njit(cache=True)
def _ll(S, logp, lab_y):
    J = S.shape[0]
    nl = lab_y.shape[0]
    tot = 0.0
    for j in range(J):
        tot += _site_term(S[j], logp[j], lab_y[j] if j < nl else -1)
    return tot


@njit(cache=True)
def _ll_surface(S, logp, lab_y, k, base, d1, d2, d, col_const, inv2s):
    """Log likelihood after moving category k's surface by ``d`` along a
    direction with per-site sum-of-squares coefficients ``base, d1, d2``."""
    J, K = S.shape
    nl = lab_y.shape[0]
    row = np.empty(K)
    tot = 0.0
    for j in range(J):
        for c in range(K):
            row[c] = S[j, c]
        q = base[j] + d * (d1[j] + d * d2[j])
        if q < 0.0:
            q = 0.0
        row[k] = col_const[j] - inv2s * q
        tot += _site_term(row, logp[j], lab_y[j] if j < nl else -1)
    return tot


@njit(cache=True)
def _ll_surfaces(S, logp, lab_y, base, d1, d2, d, col_const, inv2s):
    """Log likelihood after moving every category's surface along a joint
    direction; ``base, d1, d2`` are J x K sum-of-squares coefficients."""
    J, K = S.shape
    nl = lab_y.shape[0]
    row = np.empty(K)
    tot = 0.0
    for j in range(J):
        for c in range(K):
            q = base[j, c] + d * (d1[j, c] + d * d2[j, c])
            if q < 0.0:
                q = 0.0
            row[c] = col_const[j] - inv2s * q
        tot += _site_term(row, logp[j], lab_y[j] if j < nl else -1)
    return tot


@njit(cache=True)
def _ll_predictor(S, eta, lab_y, k, z, d):
    """Log likelihood after adding ``d * z`` to category k's linear predictor."""
    J, K = S.shape
    nl = lab_y.shape[0]
    row = np.empty(K)
    tot = 0.0
    for j in range(J):
        m = -np.inf
        for c in range(K):
            row[c] = eta[j, c]
        row[k] += d * z[j]
        for c in range(K):
            if row[c] > m:
                m = row[c]
        acc = 0.0
        for c in range(K):
            acc += np.exp(row[c] - m)
        lse = m + np.log(acc)
        for c in range(K):
            row[c] -= lse
        tot += _site_term(S[j], row, lab_y[j] if j < nl else -1)
    return tot


@njit(cache=True)
def _ll_noise(Q, logp, lab_y, half_n, s):
    J, K = Q.shape
    nl = lab_y.shape[0]
    row = np.empty(K)
    c0 = np.log(2.0 * np.pi) + s
    inv2s = 0.5 * np.exp(-s)
    tot = 0.0
    for j in range(J):
        for c in range(K):
            row[c] = -half_n[j] * c0 - inv2s * Q[j, c]
        tot += _site_term(row, logp[j], lab_y[j] if j < nl else -1)
    return tot


class _Chain:
    """Cached working state for one chain.

    ``stats`` must list labeled sites before unlabeled ones.
    """

    def __init__(self, stats: SiteStats, prior: PriorSpec, theta: ParameterState):
        self.st = stats
        self.prior = prior
        self.theta = theta
        K = theta.Gamma.shape[1]
        self.K = K
        nl = int(np.sum(stats.labels >= 0))
        if np.any(stats.labels[:nl] < 0) or np.any(stats.labels[nl:] >= 0):
            raise ConfigError("site statistics must list labeled sites first")
        self.lab_y = np.ascontiguousarray(stats.labels[:nl], dtype=np.int64)
        self.prec = np.linalg.inv(prior.gamma_covariance(K))
        self.half_n = 0.5 * stats.n.astype(float)
        self.Adiag = np.einsum("jll->jl", stats.A) if len(stats) else np.zeros((0, theta.Gamma.shape[0]))
        self.refresh()
        self.surface_dirs = None
        self.predictor_dirs = None

    def refresh(self):
        th, st = self.theta, self.st
        self.logsig2 = float(np.log(th.sigma2))
        self.AG = np.einsum("jab,bk->jak", st.A, th.Gamma)
        self.Q = np.maximum(st.c[:, None] - 2.0 * st.b @ th.Gamma + np.einsum("jak,ak->jk", self.AG, th.Gamma), 0.0)
        self.S = self._S(self.Q, self.logsig2)
        self.eta = st.X @ th.B + st.H @ th.Phi
        self.logp = self.eta - _lse_rows(self.eta)[:, None] if len(st) else self.eta.copy()

    def _S(self, Q, logsig2):
        return -self.half_n[:, None] * (LOG2PI + logsig2) - 0.5 * Q * np.exp(-logsig2)

    def loglik(self) -> float:
        return float(_ll(self.S, self.logp, self.lab_y))

    def logpost(self) -> float:
        return log_prior(self.theta, self.prior) + self.loglik()

    # surface (Gamma) moves ------------------------------------------------

    def _surface_move(self, k, v, Av, vAv):
        """Move ``Gamma[:, k] + t * v``; returns (0.0, f(t), accept(t))."""
        g = self.theta.Gamma
        col = g[:, k]
        pkk = self.prec[k, k]
        w = g @ self.prec[k] - pkk * col  # cross-category prior coupling
        cv, vv, wv = col @ v, v @ v, w @ v
        base = self.Q[:, k].copy()
        d1 = 2.0 * (self.AG[:, :, k] @ v - self.st.b @ v)
        col_const = -self.half_n * (LOG2PI + self.logsig2)
        inv2s = 0.5 * np.exp(-self.logsig2)
        S, logp, lab_y = self.S, self.logp, self.lab_y

        def f(t):
            prior = -0.5 * pkk * (2.0 * t * cv + t * t * vv) - t * wv
            return prior + _ll_surface(S, logp, lab_y, k, base, d1, vAv, t, col_const, inv2s)

        def accept(t):
            g[:, k] += t * v
            self.AG[:, :, k] += t * Av
            self.Q[:, k] = np.maximum(base + t * (d1 + t * vAv), 0.0)
            self.S[:, k] = col_const - inv2s * self.Q[:, k]

        return 0.0, f, accept

    def gamma_target(self, l, k):
        L = self.theta.Gamma.shape[0]
        v = np.zeros(L)
        v[l] = 1.0
        t0, f, acc = self._surface_move(k, v, self.st.A[:, :, l], self.Adiag[:, l])
        cur = self.theta.Gamma[l, k]
        return cur, (lambda x: f(x - cur)), (lambda x: acc(x - cur))

    def surface_dir_target(self, d):
        """Move all of ``Gamma`` along joint direction ``d`` (L x K)."""
        V, AV, VAV = self.surface_dirs
        v = V[:, :, d]
        Av = AV[:, :, :, d]
        vAv = VAV[:, :, d]
        g = self.theta.Gamma
        PV = v @ self.prec
        lin, quad = np.sum(PV * g), np.sum(PV * v)
        base = self.Q.copy()
        d1 = 2.0 * (np.einsum("jak,ak->jk", self.AG, v) - self.st.b @ v)
        col_const = -self.half_n * (LOG2PI + self.logsig2)
        inv2s = 0.5 * np.exp(-self.logsig2)
        S, logp, lab_y = self.S, self.logp, self.lab_y

        def f(t):
            return -t * lin - 0.5 * t * t * quad + _ll_surfaces(S, logp, lab_y, base, d1, vAv, t, col_const, inv2s)

        def accept(t):
            g[:] += t * v
            self.AG += t * Av
            self.Q = np.maximum(base + t * (d1 + t * vAv), 0.0)
            self.S = col_const[:, None] - inv2s * self.Q

        return 0.0, f, accept

    # linear-predictor (B, Phi) moves ------------------------------------

    def _predictor_move(self, k, vB, vPhi, z):
        B, Phi = self.theta.B, self.theta.Phi
        bs, ps = self.prior.beta_scale, self.prior.phi_scale
        bv, bb = B[:, k] @ vB, vB @ vB
        pv, pp = Phi[:, k] @ vPhi, vPhi @ vPhi
        S, eta, lab_y = self.S, self.eta, self.lab_y

        def f(t):
            prior = -(t * bv + 0.5 * t * t * bb) / bs - (t * pv + 0.5 * t * t * pp) / ps
            return prior + _ll_predictor(S, eta, lab_y, k, z, t)

        def accept(t):
            B[:, k] += t * vB
            Phi[:, k] += t * vPhi
            self.eta[:, k] += t * z
            self.logp = self.eta - _lse_rows(self.eta)[:, None] if len(self.eta) else self.eta.copy()

        return 0.0, f, accept

    def _coef_target(self, mat, i, k, which):
        P, M = self.theta.B.shape[0], self.theta.Phi.shape[0]
        vB, vPhi = np.zeros(P), np.zeros(M)
        if which == "beta":
            vB[i] = 1.0
            z = self.st.X[:, i]
        else:
            vPhi[i] = 1.0
            z = self.st.H[:, i]
        _, f, acc = self._predictor_move(k, vB, vPhi, np.ascontiguousarray(z))
        cur = mat[i, k]
        return cur, (lambda x: f(x - cur)), (lambda x: acc(x - cur))

    def beta_target(self, p, k):
        return self._coef_target(self.theta.B, p, k, "beta")

    def phi_target(self, m, k):
        return self._coef_target(self.theta.Phi, m, k, "phi")

    def predictor_dir_target(self, k, d):
        VB, VP, Z = self.predictor_dirs
        return self._predictor_move(k, VB[:, d], VP[:, d], Z[:, d])

    def logsigma2_target(self):
        a, rate = self.prior.sigma2_shape, self.prior.sigma2_rate
        cur = self.logsig2
        Q, logp, lab_y, half_n = self.Q, self.logp, self.lab_y, self.half_n

        def f(s):
            # Gamma(a, rate) density on exp(s) plus the log-Jacobian s.
            return a * s - rate * np.exp(s) + _ll_noise(Q, logp, lab_y, half_n, s)

        def accept(s):
            self.logsig2 = float(s)
            self.theta.sigma2 = float(np.exp(s))
            self.S = self._S(self.Q, s)

        return cur, f, accept

    # factor directions ------------------------------------------------------

    def build_directions(self):
        """Eigen-directions of approximate conditional precisions.

        Surface directions span all of ``Gamma``: the prior precision plus,
        for each category, the Gram matrix of its labeled sites (and a 1/K
        share of the unlabeled sites) scaled by 1/sigma2.  Predictor directions
        come from ``[X | H]`` with multinomial weights ``(1/K)(1 - 1/K)`` plus
        the prior precisions.  Directions are scaled to unit approximate
        posterior standard deviation.
        """
        st, K = self.st, self.K
        L = self.theta.Gamma.shape[0]
        nl = len(self.lab_y)
        # precision of vec(Gamma) with index l * K + k
        prec = np.kron(np.eye(L), self.prec)
        for k in range(K):
            A_k = st.A[:nl][self.lab_y == k].sum(axis=0) + st.A[nl:].sum(axis=0) / K
            prec[k::K, k::K] += A_k / self.theta.sigma2
        lam, V = np.linalg.eigh(prec)
        V = (V / np.sqrt(lam)).reshape(L, K, L * K)
        AV = np.einsum("jab,bkd->jakd", st.A, V)
        VAV = np.einsum("jakd,akd->jkd", AV, V)
        self.surface_dirs = (V, AV, VAV)
        P, M = self.theta.B.shape[0], self.theta.Phi.shape[0]
        Z = np.hstack([st.X, st.H])
        w = (1.0 / K) * (1.0 - 1.0 / K)
        prior_prec = np.concatenate([np.full(P, 1.0 / self.prior.beta_scale), np.full(M, 1.0 / self.prior.phi_scale)])
        lam, V = np.linalg.eigh(w * Z.T @ Z + np.diag(prior_prec))
        V = V / np.sqrt(lam)
        self.predictor_dirs = (V[:P], V[P:], np.ascontiguousarray(Z @ V))


def initial_state(stats: SiteStats, prior: PriorSpec, dims: dict) -> ParameterState:
    """Start at ridge least-squares reflectance surfaces with B = Phi = 0.

    A pooled fit over all fitting sites sets ``sigma2`` and the surface of
    any category without labeled sites; categories with labels get their own
    ridge fit.  The ridge is ``sigma2 / gamma_scale``.
    """
    L, M, P, K = (dims[k] for k in ("L", "M", "P", "K"))
    theta = ParameterState.zeros(L, M, P, K, sigma2=prior.sigma2_shape / prior.sigma2_rate)
    if len(stats) == 0 or stats.n.sum() == 0:
        return theta
    A, b = stats.A.sum(axis=0), stats.b.sum(axis=0)
    c, n = stats.c.sum(), stats.n.sum()
    ridge = theta.sigma2 / prior.gamma_scale
    g0 = np.linalg.solve(A + ridge * np.eye(L), b)
    resid = max(c - 2.0 * g0 @ b + g0 @ A @ g0, 0.0) / n
    if resid > 0:
        theta.sigma2 = float(resid)
    ridge = theta.sigma2 / prior.gamma_scale
    for k in range(K):
        sel = stats.labels == k
        if stats.n[sel].sum() > 0:
            theta.Gamma[:, k] = np.linalg.solve(stats.A[sel].sum(axis=0) + ridge * np.eye(L), stats.b[sel].sum(axis=0))
        else:
            theta.Gamma[:, k] = g0
    return theta


def _param_list(dims):
    L, M, P, K = (dims[k] for k in ("L", "M", "P", "K"))
    params = [("gamma", l, k) for l in range(L) for k in range(K)]
    params += [("beta", p, k) for p in range(P) for k in range(K - 1)]
    params += [("phi", m, k) for m in range(M) for k in range(K - 1)]
    params.append(("logsigma2", 0, 0))
    return params


def run_chain(data: PreparedData | SiteStats, prior: PriorSpec, cfg: ChainConfig, dims: dict | None = None,
              init: ParameterState | None = None) -> ChainOutput:
    """Run one chain and return the retained draws and diagnostics.

    ``data`` may be prepared blocks or precomputed site statistics (then
    ``dims`` must be given).
    """
    if isinstance(data, PreparedData):
        dims = {"L": data.L, "M": data.M, "P": data.P, "K": data.K}
        stats = data.stats()
    else:
        stats = data
        if dims is None:
            raise ConfigError("dims are required when passing SiteStats")
    K = dims["K"]
    if K < 2:
        raise ConfigError("need at least two cover types")
    if len(stats) and (stats.A.shape[1] != dims["L"] or stats.X.shape[1] != dims["P"] or stats.H.shape[1] != dims["M"]):
        raise ConfigError(f"site statistics do not conform to dims {dims}")
    order_idx = np.concatenate([np.flatnonzero(stats.labels >= 0), np.flatnonzero(stats.labels < 0)])
    stats = stats.subset(order_idx)
    rng = np.random.default_rng(cfg.seed)
    theta = (init.copy() if init is not None else initial_state(stats, prior, dims)).validate()
    chain = _Chain(stats, prior, theta)
    lp0 = chain.logpost()
    if not np.isfinite(lp0):
        raise NumericalError("initial log posterior is not finite; re-initialize the chain")

    params = _param_list(dims)
    n_free = dims["L"] * K + (dims["P"] + dims["M"]) * (K - 1) + 1
    assert len(params) == n_free
    widths = [cfg.width_logsigma2 if kind == "logsigma2" else cfg.width_coef for kind, _, _ in params]
    if cfg.factor_updates:
        chain.build_directions()
        moves = [("surface_dir", d, 0) for d in range(dims["L"] * K)]
        moves += [("predictor_dir", d, k) for k in range(K - 1) for d in range(dims["P"] + dims["M"])]
        params = params + moves
        widths += [cfg.width_direction] * len(moves)
    widths = np.array(widths)
    n_total = cfg.n_burnin + cfg.n_keep * cfg.thin
    trace = np.empty(n_total)
    kept = []
    t0 = time.perf_counter()
    t_burn = t0
    for it in range(n_total):
        order = rng.permutation(len(params)) if cfg.scan_order == "random" else range(len(params))
        adapting = cfg.adapt and it < cfg.n_burnin
        for idx in order:
            kind, i, k = params[idx]
            if kind == "gamma":
                cur, f, accept = chain.gamma_target(i, k)
            elif kind == "beta":
                cur, f, accept = chain.beta_target(i, k)
            elif kind == "phi":
                cur, f, accept = chain.phi_target(i, k)
            elif kind == "logsigma2":
                cur, f, accept = chain.logsigma2_target()
            elif kind == "surface_dir":
                cur, f, accept = chain.surface_dir_target(i)
            else:
                cur, f, accept = chain.predictor_dir_target(k, i)
            new, _ = slice_update_scalar(f, cur, widths[idx], cfg.max_stepout, rng)
            accept(new)
            if adapting:
                widths[idx] += (2.0 * abs(new - cur) - widths[idx]) / (it + 1)
                widths[idx] = max(widths[idx], 1e-8)
        trace[it] = chain.logpost()
        if not np.isfinite(trace[it]):
            raise NumericalError(f"log posterior became non-finite at iteration {it}")
        if it == cfg.n_burnin - 1:
            t_burn = time.perf_counter()
        if it >= cfg.n_burnin and (it - cfg.n_burnin + 1) % cfg.thin == 0:
            kept.append(chain.theta.copy())
    t_end = time.perf_counter()
    if cfg.n_burnin == 0:
        t_burn = t0
    draws = PosteriorDraws.from_states(kept)
    ess = {}
    names, flat = draws.flat()
    if len(draws) >= 10:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateTraceWarning)
            for name, col in zip(names, flat.T):
                if name.startswith(("B[", "Phi[")) and name.endswith(f",{K}]"):
                    continue
                ess[name] = effective_sample_size(col)
        low = [n for n, v in ess.items() if n.startswith("B[") and v < 100]
        if low:
            warnings.warn(f"ESS below 100 for {', '.join(low)}", LowESSWarning, stacklevel=2)
    width_map = {kind if kind == "logsigma2" else f"{kind}[{i + 1},{k + 1}]": float(w)
                 for (kind, i, k), w in zip(params, widths)}
    return ChainOutput(
        draws=draws,
        logpost_trace=trace,
        ess=ess,
        timings={"burnin_seconds": t_burn - t0, "sampling_seconds": t_end - t_burn, "total_seconds": t_end - t0},
        widths=width_map,
    )
