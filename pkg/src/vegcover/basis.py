"""Thin-plate-spline bases over the wavelength x date and spatial domains.

Both bases use knot-centred radial functions ``phi(r) = r^2 log r`` on inputs
mapped affinely to the unit square.  A fitted :class:`TPSBasis` stores the
standardization bounds, the knots and the per-column scaling so that
prediction-time evaluation reproduces the training design exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class KnotSet:
    """Knot locations in standardized coordinates.

    ``domain_bounds`` is a 2x2 array ``[[xmin, xmax], [ymin, ymax]]`` that
    contains every knot.
    """

    knots: np.ndarray
    domain_bounds: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float).reshape(-1, 2)
        bounds = np.asarray(self.domain_bounds, dtype=float).reshape(2, 2)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "domain_bounds", bounds)
        if knots.shape[0] == 0:
            raise ConfigError("knot set is empty")
        lo, hi = bounds[:, 0], bounds[:, 1]
        if np.any(knots < lo - 1e-12) or np.any(knots > hi + 1e-12):
            raise ConfigError("knots fall outside domain bounds")
        if len(np.unique(knots, axis=0)) != len(knots):
            raise ConfigError("knots are not pairwise distinct")

    def __len__(self):
        return self.knots.shape[0]


@dataclass(frozen=True)
class BasisMatrix:
    values: np.ndarray
    point_ids: np.ndarray

    @property
    def shape(self):
        return self.values.shape


def _check_bounds(domain_bounds):
    bounds = np.asarray(domain_bounds, dtype=float).reshape(2, 2)
    for axis, (lo, hi) in enumerate(bounds):
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
            raise ConfigError(f"degenerate bounds on axis {axis}: [{lo}, {hi}]")
    return bounds


def _check_counts(count_per_axis):
    counts = tuple(int(c) for c in count_per_axis)
    if len(counts) != 2 or min(counts) < 1:
        raise ConfigError(f"knot counts must be two positive integers, got {count_per_axis}")
    return counts


def make_regular_knots(domain_bounds, count_per_axis) -> KnotSet:
    """Knots at the centres of a ``cx x cy`` equal-area partition of the bounds."""
    bounds = _check_bounds(domain_bounds)
    counts = _check_counts(count_per_axis)
    axes = []
    for (lo, hi), c in zip(bounds, counts):
        axes.append(lo + (hi - lo) * (np.arange(c) + 0.5) / c)
    gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
    return KnotSet(np.column_stack([gx.ravel(), gy.ravel()]), bounds)


def make_quantile_knots(points, count_per_axis) -> KnotSet:
    """Per-axis empirical quantiles at levels ``(i - 0.5) / count``, crossed.

    Knots are placed so that roughly equal numbers of points fall between
    consecutive knot coordinates on each axis.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    counts = _check_counts(count_per_axis)
    axes = []
    for axis, c in enumerate(counts):
        col = pts[:, axis]
        n_distinct = len(np.unique(col))
        if n_distinct < c:
            name = "xy"[axis]
            raise ConfigError(
                f"axis {name} has {n_distinct} distinct value(s), fewer than {c} requested knots"
            )
        levels = (np.arange(1, c + 1) - 0.5) / c
        coords = np.quantile(col, levels)
        if len(np.unique(coords)) != c:
            raise ConfigError(f"axis {'xy'[axis]} quantile knots coincide; reduce the count")
        axes.append(coords)
    gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
    bounds = np.array([[pts[:, 0].min(), pts[:, 0].max()], [pts[:, 1].min(), pts[:, 1].max()]])
    return KnotSet(np.column_stack([gx.ravel(), gy.ravel()]), bounds)


def tps_kernel(r2):
    """``r^2 log r`` written in terms of the squared distance, 0 at r = 0."""
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros_like(r2)
    pos = r2 > 0
    out[pos] = 0.5 * r2[pos] * np.log(r2[pos])
    return out


def eval_tps_basis(points, knots: KnotSet, point_ids=None) -> BasisMatrix:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if point_ids is None:
        point_ids = np.arange(len(pts))
    point_ids = np.asarray(point_ids)
    bad = ~np.all(np.isfinite(pts), axis=1)
    if bad.any():
        ids = ", ".join(str(i) for i in point_ids[bad][:10])
        raise ConfigError(f"non-finite coordinates for point(s): {ids}")
    diff = pts[:, None, :] - knots.knots[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    return BasisMatrix(tps_kernel(r2), point_ids)


def factor_pair(n: int) -> tuple[int, int]:
    """Closest factorization ``a * b == n`` with ``a <= b``."""
    if n < 1:
        raise ConfigError(f"basis dimension must be positive, got {n}")
    a = int(np.floor(np.sqrt(n)))
    while n % a:
        a -= 1
    return a, n // a


def axis_counts(n_basis: int, points) -> tuple[int, int]:
    """Split ``n_basis`` over two axes; the axis with more distinct values
    gets the larger count (ties go to the second axis)."""
    small, large = factor_pair(n_basis)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    nx, ny = (len(np.unique(pts[:, a])) for a in (0, 1))
    return (large, small) if nx > ny else (small, large)


@dataclass(frozen=True)
class TPSBasis:
    """A fitted basis: standardization, knots, and column scaling."""

    lower: np.ndarray
    upper: np.ndarray
    knots: KnotSet
    col_scale: np.ndarray

    @property
    def size(self) -> int:
        return len(self.knots)

    def standardize(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return (pts - self.lower) / (self.upper - self.lower)

    def evaluate(self, points, point_ids=None) -> BasisMatrix:
        raw = eval_tps_basis(self.standardize(points), self.knots, point_ids)
        return BasisMatrix(raw.values / self.col_scale, raw.point_ids)

    def to_dict(self) -> dict:
        return {
            "lower": [float(v) for v in self.lower],
            "upper": [float(v) for v in self.upper],
            "knots": [[float(a), float(b)] for a, b in self.knots.knots],
            "knot_bounds": [[float(a), float(b)] for a, b in self.knots.domain_bounds],
            "col_scale": [float(v) for v in self.col_scale],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TPSBasis":
        return cls(
            lower=np.array(d["lower"], dtype=float),
            upper=np.array(d["upper"], dtype=float),
            knots=KnotSet(np.array(d["knots"], dtype=float), np.array(d["knot_bounds"], dtype=float)),
            col_scale=np.array(d["col_scale"], dtype=float),
        )


def fit_tps_basis(points, n_basis: int, strategy: str = "regular", counts: Sequence[int] | None = None,
                  bounds=None) -> TPSBasis:
    """Build a basis from training points in original units.

    Points are mapped to [0, 1]^2 by their per-axis min/max (or by explicit
    ``bounds`` rows ``[lo, hi]``), knots are placed by ``strategy``
    ("regular" or "quantile"), and columns are divided by their standard
    deviation over the training points.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ConfigError("cannot build a basis from zero points")
    if bounds is None:
        lower, upper = pts.min(axis=0), pts.max(axis=0)
    else:
        lower, upper = np.asarray(bounds, dtype=float).reshape(2, 2).T
    _check_bounds(np.column_stack([lower, upper]))
    std_pts = (pts - lower) / (upper - lower)
    if counts is None:
        counts = axis_counts(n_basis, pts)
    if counts[0] * counts[1] != n_basis:
        raise ConfigError(f"knot counts {tuple(counts)} do not multiply to {n_basis}")
    if strategy == "regular":
        knots = make_regular_knots([[0.0, 1.0], [0.0, 1.0]], counts)
    elif strategy == "quantile":
        knots = make_quantile_knots(std_pts, counts)
    else:
        raise ConfigError(f"unknown knot strategy {strategy!r}")
    values = eval_tps_basis(std_pts, knots).values
    scale = values.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return TPSBasis(lower, upper, knots, scale)


@dataclass(frozen=True)
class RankReport:
    rank: int
    n_columns: int
    singular_values: np.ndarray

    @property
    def deficient(self) -> bool:
        return self.rank < self.n_columns

    def __str__(self):
        status = "DEFICIENT" if self.deficient else "full rank"
        return f"[X | H] rank {self.rank} of {self.n_columns} columns ({status})"


def check_spatial_identifiability(X, H) -> RankReport:
    """Numerical rank of ``[X | H]`` at relative tolerance 1e-10."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    H = np.atleast_2d(np.asarray(getattr(H, "values", H), dtype=float))
    if X.shape[0] != H.shape[0]:
        raise ConfigError(f"X has {X.shape[0]} rows but H has {H.shape[0]}")
    Z = np.hstack([X, H])
    s = np.linalg.svd(Z, compute_uv=False)
    rank = int(np.sum(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
    return RankReport(rank, Z.shape[1], s)
