import numpy as np
import pytest

from core.numerics import (ASCENT, DESCENT, GradientSet, MlpNetwork, apply_update, backward,
                           finite_diff_check, forward, sigmoid, softmax, xavier_init)
from utils.errors import ConfigurationError, DimensionError, NumericalError
from utils.seeding import derive_seed, make_rng


def test_xavier_init_is_deterministic_per_seed():
    a = xavier_init([3, 5, 2], seed=7)
    b = xavier_init([3, 5, 2], seed=7)
    c = xavier_init([3, 5, 2], seed=8)
    for wa, wb in zip(a.weights, b.weights):
        np.testing.assert_array_equal(wa, wb)
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_xavier_init_bounds_and_zero_biases():
    net = xavier_init([4, 6, 3], seed=1)
    for w, b in zip(net.weights, net.biases):
        bound = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        assert np.all(np.abs(w) <= bound)
        np.testing.assert_array_equal(b, np.zeros_like(b))
    assert net.layer_dims == [4, 6, 3]
    assert net.n_params == 4 * 6 + 6 + 6 * 3 + 3


@pytest.mark.parametrize('dims', [[], [3], [3, 0]])
def test_xavier_init_rejects_bad_dims(dims):
    with pytest.raises(ConfigurationError):
        xavier_init(dims, seed=0)


def test_forward_rejects_wrong_width():
    net = xavier_init([3, 2], seed=0)
    with pytest.raises(DimensionError):
        forward(net, np.zeros((4, 2)))


def test_forward_keeps_every_layer():
    net = xavier_init([3, 4, 2], seed=0, output_activation='softmax')
    acts = forward(net, np.ones((5, 3)))
    assert [a.shape for a in acts] == [(5, 3), (5, 4), (5, 2)]
    np.testing.assert_allclose(acts[-1].sum(axis=1), 1.0)


def test_sigmoid_and_softmax_are_stable():
    assert sigmoid(np.array([0.0]))[0] == 0.5
    extreme = sigmoid(np.array([-1000.0, 1000.0]))
    assert np.all(np.isfinite(extreme))
    np.testing.assert_allclose(extreme, [0.0, 1.0])
    probs = softmax(np.array([[1000.0, 1000.0], [0.0, np.log(3.0)]]))
    np.testing.assert_allclose(probs, [[0.5, 0.5], [0.25, 0.75]])


@pytest.mark.parametrize('activation', ['identity', 'sigmoid', 'softmax'])
def test_backward_matches_finite_differences(activation):
    rng = make_rng(3)
    net = xavier_init([3, 5, 4, 2], seed=11, output_activation=activation)
    x = rng.normal(size=(6, 3))
    weights = rng.normal(size=(6, 2))

    def loss(candidate):
        return float(np.sum(weights * candidate.predict(x)))

    grads, _ = backward(net, forward(net, x), weights)
    assert finite_diff_check(loss, net, grads) < 1e-4


def test_backward_input_gradient():
    rng = make_rng(4)
    net = xavier_init([3, 4, 1], seed=2, output_activation='sigmoid')
    x = rng.normal(size=(2, 3))
    _, input_grad = backward(net, forward(net, x), np.ones((2, 1)))
    h = 1e-6
    for idx in np.ndindex(x.shape):
        plus, minus = x.copy(), x.copy()
        plus[idx] += h
        minus[idx] -= h
        numeric = (net.predict(plus).sum() - net.predict(minus).sum()) / (2 * h)
        assert abs(numeric - input_grad[idx]) < 1e-6


def test_apply_update_directions():
    net = xavier_init([2, 2], seed=0)
    grads = GradientSet([np.ones((2, 2))], [np.ones(2)])
    up = apply_update(net, grads, 0.5, ASCENT)
    down = apply_update(net, grads, 0.5, DESCENT)
    np.testing.assert_allclose(up.weights[0], net.weights[0] + 0.5)
    np.testing.assert_allclose(down.biases[0], net.biases[0] - 0.5)
    unchanged = apply_update(net, grads, 0.0, ASCENT)
    np.testing.assert_array_equal(unchanged.weights[0], net.weights[0])


def test_apply_update_reports_non_finite_layer():
    net = xavier_init([2, 3, 1], seed=0)
    grads = GradientSet.zeros_like(net)
    grads.weights[1][0, 0] = np.nan
    with pytest.raises(NumericalError) as excinfo:
        apply_update(net, grads, 0.1, DESCENT)
    assert excinfo.value.layer == 1


def test_apply_update_rejects_incongruent_gradients():
    net = xavier_init([2, 3, 1], seed=0)
    other = GradientSet.zeros_like(xavier_init([2, 1], seed=0))
    with pytest.raises(DimensionError):
        apply_update(net, other, 0.1, DESCENT)


def test_network_rejects_mismatched_layers():
    with pytest.raises(DimensionError):
        MlpNetwork([np.zeros((2, 3)), np.zeros((4, 1))], [np.zeros(3), np.zeros(1)])
    with pytest.raises(ConfigurationError):
        MlpNetwork([np.zeros((2, 1))], [np.zeros(1)], 'relu')


def test_gradient_set_helpers():
    net = xavier_init([2, 2], seed=0)
    grads = GradientSet([np.full((2, 2), -3.0)], [np.ones(2)])
    assert grads.max_abs() == 3.0
    doubled = grads + grads
    np.testing.assert_array_equal(doubled.weights[0], grads.scaled(2.0).weights[0])
    zeros = GradientSet.zeros_like(net)
    assert zeros.norm() == 0.0


def test_derive_seed_is_stable_and_key_sensitive():
    assert derive_seed(5, 1) == derive_seed(5, 1)
    assert derive_seed(5, 1) != derive_seed(5, 2)
    a = make_rng(9).random(3)
    b = make_rng(9).random(3)
    np.testing.assert_array_equal(a, b)
