"""Empirical Wasserstein-1 distances between feature clouds."""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from config.settings import DISTANCE_METHOD, DISTANCE_ON, DISTANCE_ROWS, EXACT_MAX_POINTS, N_PROJECTIONS
from utils.errors import ConfigurationError, DataError, DimensionError, SizeError
from utils.seeding import make_rng

logger = logging.getLogger('core.transport')

METHODS = ('exact', 'sliced')
DISTANCE_TARGETS = ('cloud', 'pooled')


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Uniformly weighted point cloud (n points x d dims)."""

    support: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.float64)
        if support.ndim == 1:
            support = support.reshape(1, -1)
        if support.ndim != 2 or support.shape[0] < 1:
            raise DimensionError("Empirical distribution needs at least one point")
        if not np.all(np.isfinite(support)):
            raise DataError("Empirical distribution has non-finite entries")
        object.__setattr__(self, 'support', support)

    @property
    def n(self):
        return self.support.shape[0]

    @property
    def dim(self):
        return self.support.shape[1]


@dataclass(frozen=True)
class DistanceReport:
    value: float
    method: str
    n_projections: Optional[int] = None


@dataclass(frozen=True)
class DistanceConfig:
    """How the reward's distance d is evaluated."""

    method: str = DISTANCE_METHOD
    n_projections: int = N_PROJECTIONS
    seed: int = 0
    distance_on: str = DISTANCE_ON
    max_rows: int = DISTANCE_ROWS

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"Distance method must be one of {METHODS}, got '{self.method}'")
        if self.distance_on not in DISTANCE_TARGETS:
            raise ConfigurationError(
                f"distance_on must be one of {DISTANCE_TARGETS}, got '{self.distance_on}'")
        if self.n_projections < 1:
            raise ConfigurationError(f"n_projections must be >= 1, got {self.n_projections}")
        if self.max_rows < 1:
            raise ConfigurationError(f"max_rows must be >= 1, got {self.max_rows}")


def _as_distribution(value):
    return value if isinstance(value, EmpiricalDistribution) else EmpiricalDistribution(value)


def _check_dims(a, b):
    if a.dim != b.dim:
        raise DimensionError(f"Distributions live in different dimensions ({a.dim} vs {b.dim})")


def wasserstein_exact(a, b):
    """W1 with Euclidean cost via optimal assignment.

    Only equal-size supports are handled (uniform weights make the optimal
    plan a permutation); use ``wasserstein_sliced`` otherwise.
    """
    a, b = _as_distribution(a), _as_distribution(b)
    _check_dims(a, b)
    if a.n != b.n:
        raise ConfigurationError(
            f"Exact W1 needs equal support sizes ({a.n} vs {b.n}); use wasserstein_sliced")
    if a.n > EXACT_MAX_POINTS:
        raise SizeError(f"Exact W1 supports at most {EXACT_MAX_POINTS} points, got {a.n}")

    cost = cdist(a.support, b.support, metric='euclidean')
    rows, cols = linear_sum_assignment(cost)
    value = float(cost[rows, cols].mean())
    return DistanceReport(max(value, 0.0), 'exact')


def wasserstein_1d(u, v):
    """Exact W1 between 1-D samples, column by column.

    Both inputs are (n, P) and (m, P) arrays of projected samples; the
    quantile functions are compared on the merged grid {k/n} U {j/m}.
    """
    u = np.sort(np.asarray(u, dtype=np.float64), axis=0)
    v = np.sort(np.asarray(v, dtype=np.float64), axis=0)
    n, m = u.shape[0], v.shape[0]
    grid = np.union1d(np.arange(1, n + 1) / n, np.arange(1, m + 1) / m)
    widths = np.diff(np.concatenate(([0.0], grid)))
    mids = grid - widths / 2.0
    iu = np.minimum(np.floor(mids * n).astype(np.int64), n - 1)
    iv = np.minimum(np.floor(mids * m).astype(np.int64), m - 1)
    return (widths[:, None] * np.abs(u[iu] - v[iv])).sum(axis=0)


def random_directions(dim, n_projections, seed):
    rng = make_rng(seed)
    directions = rng.normal(0.0, 1.0, size=(n_projections, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return directions


def wasserstein_sliced(a, b, n_projections=N_PROJECTIONS, seed=0):
    """Average 1-D W1 over seeded random unit directions."""
    a, b = _as_distribution(a), _as_distribution(b)
    if a.dim == 0 or b.dim == 0:
        raise ConfigurationError("Sliced W1 needs at least one feature dimension")
    _check_dims(a, b)
    if n_projections < 1:
        raise ConfigurationError(f"n_projections must be >= 1, got {n_projections}")

    directions = random_directions(a.dim, n_projections, seed)
    per_direction = wasserstein_1d(a.support @ directions.T, b.support @ directions.T)
    return DistanceReport(max(float(per_direction.mean()), 0.0), 'sliced', n_projections)


def _distance(a, b, method, n_projections, seed):
    if method == 'exact':
        return wasserstein_exact(a, b)
    return wasserstein_sliced(a, b, n_projections, seed)


def domain_distance(bundle_a, bundle_b, cfg):
    """Distance d between two domains' specific features.

    ``cloud`` compares the f_ds rows (at most ``cfg.max_rows`` of each);
    ``pooled`` compares the mean embeddings as single points.
    """
    if cfg.distance_on == 'pooled':
        a, b = bundle_a.phi.reshape(1, -1), bundle_b.phi.reshape(1, -1)
    else:
        a, b = bundle_a.f_ds[:cfg.max_rows], bundle_b.f_ds[:cfg.max_rows]
    return _distance(a, b, cfg.method, cfg.n_projections, cfg.seed).value


def pairwise_domain_distances(bundles, method=DISTANCE_METHOD, n_projections=N_PROJECTIONS,
                              seed=0, distance_on='cloud'):
    """Symmetric matrix of distances between the f_ds supports of the bundles."""
    bundles = list(bundles)
    if len(bundles) < 2:
        raise ConfigurationError("Need at least two bundles for pairwise distances")
    dims = {b.f_ds.shape[1] for b in bundles}
    if len(dims) != 1:
        raise DimensionError(f"Bundles disagree on f_ds dimension: {sorted(dims)}")

    cfg = DistanceConfig(method=method, n_projections=n_projections, seed=seed,
                         distance_on=distance_on, max_rows=max(b.f_ds.shape[0] for b in bundles))
    size = len(bundles)
    matrix = np.zeros((size, size))
    for i in range(size):
        for j in range(i + 1, size):
            matrix[i, j] = matrix[j, i] = domain_distance(bundles[i], bundles[j], cfg)
    return matrix
