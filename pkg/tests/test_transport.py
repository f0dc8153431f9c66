import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import wasserstein_distance

from core.disentangle import FeatureBundle, build_model, extract
from core.transport import (DistanceConfig, EmpiricalDistribution, domain_distance, pairwise_domain_distances,
                            wasserstein_1d, wasserstein_exact, wasserstein_sliced)
from data.synthetic import generate_rotated_gaussians
from utils.errors import ConfigurationError, DataError, DimensionError, SizeError
from utils.seeding import make_rng


def _brute_force(a, b):
    n = a.shape[0]
    best = np.inf
    for perm in itertools.permutations(range(n)):
        cost = np.mean(np.linalg.norm(a - b[list(perm)], axis=1))
        best = min(best, cost)
    return best


def test_exact_matches_permutation_brute_force():
    rng = make_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 6))
        d = int(rng.integers(1, 4))
        a = rng.normal(size=(n, d))
        b = rng.normal(size=(n, d))
        assert abs(wasserstein_exact(a, b).value - _brute_force(a, b)) < 1e-9


def test_exact_hand_example():
    report = wasserstein_exact(np.array([[0.0], [1.0]]), np.array([[2.0], [3.0]]))
    assert report.value == pytest.approx(2.0, abs=1e-12)
    assert report.method == 'exact'
    assert wasserstein_exact(np.array([[1.0, 2.0]]), np.array([[1.0, 2.0]])).value == 0.0


def test_sliced_equals_exact_in_one_dimension():
    rng = make_rng(1)
    for _ in range(20):
        n = int(rng.integers(1, 30))
        a = rng.normal(size=(n, 1))
        b = rng.normal(loc=1.0, size=(n, 1))
        sliced = wasserstein_sliced(a, b, n_projections=3, seed=5).value
        assert sliced == pytest.approx(wasserstein_exact(a, b).value, abs=1e-9)


def test_one_dimensional_w1_matches_scipy_for_unequal_sizes():
    rng = make_rng(2)
    for _ in range(20):
        u = rng.normal(size=int(rng.integers(1, 40)))
        v = rng.normal(size=int(rng.integers(1, 40)))
        ours = wasserstein_1d(u[:, None], v[:, None])[0]
        assert ours == pytest.approx(wasserstein_distance(u, v), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1), n=st.integers(1, 6), d=st.integers(1, 3))
def test_metric_axioms(seed, n, d):
    rng = make_rng(seed)
    a, b, c = (rng.normal(size=(n, d)) for _ in range(3))
    ab, ba = wasserstein_exact(a, b).value, wasserstein_exact(b, a).value
    assert wasserstein_exact(a, a).value == 0.0
    assert ab >= 0.0
    assert ab == pytest.approx(ba, abs=1e-12)
    assert ab <= wasserstein_exact(a, c).value + wasserstein_exact(c, b).value + 1e-9

    sliced = [wasserstein_sliced(x, y, n_projections=8, seed=3).value for x, y in ((a, b), (a, c), (c, b))]
    assert sliced[0] <= sliced[1] + sliced[2] + 1e-9
    assert wasserstein_sliced(a, a, n_projections=8, seed=3).value == 0.0


def test_sliced_is_seed_deterministic_and_handles_unequal_sizes():
    rng = make_rng(3)
    a, b = rng.normal(size=(20, 3)), rng.normal(size=(13, 3))
    first = wasserstein_sliced(a, b, n_projections=16, seed=9)
    second = wasserstein_sliced(a, b, n_projections=16, seed=9)
    assert first.value == second.value
    assert first.n_projections == 16 and first.value > 0.0


def test_error_cases():
    with pytest.raises(ConfigurationError):
        wasserstein_exact(np.zeros((2, 1)), np.zeros((3, 1)))
    with pytest.raises(SizeError):
        wasserstein_exact(np.zeros((65, 1)), np.zeros((65, 1)))
    with pytest.raises(DimensionError):
        wasserstein_sliced(np.zeros((2, 1)), np.zeros((2, 2)))
    with pytest.raises(ConfigurationError):
        wasserstein_sliced(np.zeros((2, 1)), np.zeros((2, 1)), n_projections=0)
    with pytest.raises(DataError):
        EmpiricalDistribution(np.array([[np.nan]]))
    with pytest.raises(ConfigurationError):
        DistanceConfig(method='greedy')


def _bundle(points, domain_id):
    points = np.asarray(points, dtype=float)
    return FeatureBundle(f_di=points, f_ds=points, phi=points.mean(axis=0), domain_id=domain_id)


def test_domain_distance_cloud_and_pooled():
    a = _bundle([[0.0, 0.0], [2.0, 0.0]], 0)
    b = _bundle([[0.0, 3.0], [2.0, 3.0]], 1)
    cloud = DistanceConfig(method='exact', distance_on='cloud', max_rows=2)
    pooled = DistanceConfig(method='exact', distance_on='pooled')
    assert domain_distance(a, b, cloud) == pytest.approx(3.0)
    assert domain_distance(a, b, pooled) == pytest.approx(3.0)


def test_pairwise_domain_distances_is_symmetric_with_zero_diagonal():
    rng = make_rng(4)
    bundles = [_bundle(rng.normal(loc=i, size=(10, 2)), i) for i in range(4)]
    matrix = pairwise_domain_distances(bundles, method='sliced', n_projections=8, seed=0)
    np.testing.assert_array_equal(matrix, matrix.T)
    np.testing.assert_array_equal(np.diag(matrix), np.zeros(4))
    assert np.all(matrix[~np.eye(4, dtype=bool)] > 0.0)


def test_sliced_mean_shift_of_gaussian_blobs():
    rng = make_rng(21)
    a = rng.normal(size=(2000, 2))
    b = rng.normal(size=(2000, 2)) + np.array([2.0, 0.0])
    value = wasserstein_sliced(a, b, n_projections=64, seed=3).value
    assert value == pytest.approx(4.0 / np.pi, rel=0.15)


def test_untrained_specific_features_keep_rotation_order():
    wins = 0
    for seed in range(20):
        domains = generate_rotated_gaussians(200, [0.0, 18.0, 90.0], 0.1, seed=seed)
        model = build_model(2, 2, seed=seed)
        source, near, far = (extract(model, d.features, d.domain_id) for d in domains)
        cfg = DistanceConfig(method='sliced', seed=seed, max_rows=200)
        wins += domain_distance(source, far, cfg) > domain_distance(source, near, cfg)
    assert wins >= 18
