"""Fixed selection strategies used by the ablation modes."""
import logging

import numpy as np

from core.numerics import MlpNetwork, xavier_init
from strategies.base_strategy import BaseStrategy
from strategies.policy import ActionSample

logger = logging.getLogger('strategies.fixed')

# sigmoid(+-20) sits beyond the probability clamp
SATURATED_BIAS = 20.0


def constant_policy(input_dim, bias, hidden=(6,)):
    """Sigmoid policy whose output ignores its input: p = sigmoid(bias)."""
    net = xavier_init([input_dim, *hidden, 1], seed=0, output_activation='sigmoid')
    weights = [w.copy() for w in net.weights]
    biases = [b.copy() for b in net.biases]
    weights[-1] = np.zeros_like(weights[-1])
    biases[-1] = np.full_like(biases[-1], float(bias))
    return MlpNetwork(weights, biases, 'sigmoid')


class SelectAllStrategy(BaseStrategy):
    """Select every visited domain (disentangle_only)."""

    name = 'select_all'

    def probability(self, state):
        return 1.0

    def decide(self, state, rng, greedy=False):
        return ActionSample(a=1, p=1.0, log_prob=0.0)

    def policy_network(self, input_dim, hidden):
        return constant_policy(input_dim, SATURATED_BIAS, hidden)


class SelectNoneStrategy(BaseStrategy):
    """Never select a domain (classifier_only)."""

    name = 'select_none'

    def probability(self, state):
        return 0.0

    def decide(self, state, rng, greedy=False):
        return ActionSample(a=0, p=0.0, log_prob=0.0)

    def policy_network(self, input_dim, hidden):
        return constant_policy(input_dim, -SATURATED_BIAS, hidden)
