"""Reinforcement-learning domain selector.

The policy network P reads the state (previously selected embedding,
current embedding, target embedding) and outputs the probability of
selecting the current intermediate domain. Rewards favour domains that sit
between the previously selected domain and the target; P is trained with
REINFORCE on discounted returns.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from config.settings import GAMMA, PENALTY_SCALE, POLICY_BASELINE, POLICY_RATE, PROB_CLAMP
from core.numerics import ASCENT, GradientSet, MlpNetwork, apply_update, backward, forward
from core.transport import DistanceConfig
from strategies.base_strategy import BaseStrategy
from utils.errors import ConfigurationError, ContractError, DataError, DimensionError

logger = logging.getLogger('strategies.policy')


@dataclass(frozen=True, eq=False)
class PolicyState:
    """State s_T = (prev_selected, current, target) as pooled embeddings."""

    prev_selected: np.ndarray
    current: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        segments = []
        for name in ('prev_selected', 'current', 'target'):
            value = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if not np.all(np.isfinite(value)):
                raise DataError(f"State segment '{name}' has non-finite entries")
            object.__setattr__(self, name, value)
            segments.append(value.shape[0])
        if len(set(segments)) != 1:
            raise DimensionError(f"State segments must have equal length, got {segments}")

    @property
    def vector(self):
        return np.concatenate([self.prev_selected, self.current, self.target])


@dataclass(frozen=True)
class ActionSample:
    a: int
    p: float
    log_prob: float


@dataclass(frozen=True)
class RewardConfig:
    """Discount, penalty and distance settings of the reward."""

    gamma: float = GAMMA
    penalty: float = -PENALTY_SCALE
    distance: DistanceConfig = field(default_factory=DistanceConfig)
    baseline: bool = POLICY_BASELINE

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not self.penalty < 0:
            raise ConfigurationError(f"penalty must be negative, got {self.penalty}")


class ScaledPenalty:
    """Penalty that follows the scale of the distances seen so far.

    A negative ``fixed`` value is returned unchanged. Otherwise the penalty
    is ``-scale`` times the running mean of the observed D_it_s values.
    """

    def __init__(self, fixed=0.0, scale=PENALTY_SCALE):
        if fixed > 0:
            raise ConfigurationError(f"penalty must be <= 0, got {fixed}")
        if scale <= 0:
            raise ConfigurationError(f"penalty scale must be > 0, got {scale}")
        self.fixed = float(fixed)
        self.scale = float(scale)
        self.total = 0.0
        self.count = 0

    def observe(self, D_it_s):
        self.total += float(D_it_s)
        self.count += 1

    @property
    def value(self):
        if self.fixed < 0:
            return self.fixed
        mean = self.total / self.count if self.count else 0.0
        # a zero mean (collapsed embeddings) falls back to unit scale
        return -self.scale * (mean if mean > 0 else 1.0)


def build_state(prev_phi, cur_phi, target_phi):
    return PolicyState(prev_phi, cur_phi, target_phi)


def clamp_probability(p):
    return float(np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP))


def action_log_prob(a, p):
    """log pi(a|s) = a log p + (1 - a) log(1 - p), with p clamped."""
    p = clamp_probability(p)
    return float(a * np.log(p) + (1 - a) * np.log(1.0 - p))


def _make_action(a, p):
    return ActionSample(a=int(a), p=clamp_probability(p), log_prob=action_log_prob(a, p))


def _check_policy(P, state_dim):
    if P.output_activation != 'sigmoid' or P.output_dim != 1:
        raise ConfigurationError("Policy network needs a scalar sigmoid output")
    if P.input_dim != state_dim:
        raise DimensionError(f"Policy expects {P.input_dim} inputs, state has {state_dim}")


def policy_probability(P, state):
    """Unclamped p = P(state)."""
    vector = state.vector
    _check_policy(P, vector.shape[0])
    return float(P.predict(vector)[0, 0])


def sample_action(P, state, rng):
    """Draw a ~ Bernoulli(P(state))."""
    p = policy_probability(P, state)
    a = int(rng.random() < p)
    return _make_action(a, p)


def greedy_action(P, state):
    """Deterministic action a = [p >= 0.5]."""
    p = policy_probability(P, state)
    return _make_action(int(p >= 0.5), p)


def step_reward(D_it_s, D_ii_next, D_it_next, a, cfg):
    """One-step reward for visiting a domain.

    Args:
        D_it_s: distance from the previously selected domain to the target
        D_ii_next: distance from the current domain to the previously selected one
        D_it_next: distance from the current domain to the target
        a: action taken (1 selects the current domain)
        cfg: RewardConfig

    Returns:
        float: 0 for a skip, 2*D_it_s - D_ii_next - D_it_next for a selection
        that moves closer to the target from both sides, the penalty otherwise
    """
    distances = (D_it_s, D_ii_next, D_it_next)
    if any(not np.isfinite(d) or d < 0 for d in distances):
        raise ContractError(f"Distances must be finite and non-negative, got {distances}")
    if a not in (0, 1):
        raise ContractError(f"Action must be 0 or 1, got {a}")
    if a == 0:
        return 0.0
    if D_ii_next < D_it_s and D_it_next < D_it_s:
        return float(2.0 * D_it_s - D_ii_next - D_it_next)
    return float(cfg.penalty)


def compute_returns(rewards, gamma):
    """G_T = R_T + gamma * G_{T+1}, with G after the last step equal to the last reward."""
    returns = [0.0] * len(rewards)
    running = 0.0
    for index in reversed(range(len(rewards))):
        running = float(rewards[index]) + gamma * running
        returns[index] = running
    return returns


@dataclass(eq=False)
class RolloutStep:
    domain_id: int
    state: PolicyState = field(repr=False)
    action: ActionSample
    reward: float
    distances: Tuple[float, float, float]


@dataclass(eq=False)
class RolloutTrace:
    """One shuffled pass over the intermediate pool."""

    steps: List[RolloutStep] = field(default_factory=list)
    gamma: float = GAMMA
    returns: Optional[List[float]] = None

    def add(self, step):
        if self.returns is not None:
            raise ContractError("Cannot extend a finished rollout")
        self.steps.append(step)

    def finish(self, gamma=None):
        if gamma is not None:
            self.gamma = gamma
        self.returns = compute_returns(self.rewards, self.gamma)
        return self

    @property
    def rewards(self):
        return [step.reward for step in self.steps]

    @property
    def path(self):
        return [step.domain_id for step in self.steps if step.action.a == 1]

    @property
    def cumulative_reward(self):
        if self.returns is None:
            raise ContractError("Rollout has no returns yet; call finish() first")
        return self.returns[0] if self.returns else 0.0


def take_step(strategy, domain_id, prev_phi, cur_phi, target_phi, distances, cfg, rng,
              greedy=False, forced_action=None):
    """Build the state, act, and score the action.

    ``strategy`` is a BaseStrategy or a bare policy network.
    ``forced_action`` replaces the decision while still recording p.

    Returns:
        tuple: (RolloutStep, embedding to use as prev_selected next)
    """
    if isinstance(strategy, MlpNetwork):
        strategy = PolicyGradientStrategy(strategy)
    state = build_state(prev_phi, cur_phi, target_phi)
    if forced_action is not None:
        if forced_action not in (0, 1):
            raise ContractError(f"Forced action must be 0 or 1, got {forced_action}")
        action = _make_action(forced_action, strategy.probability(state))
    else:
        action = strategy.decide(state, rng, greedy)

    reward = step_reward(*distances, action.a, cfg)
    step = RolloutStep(int(domain_id), state, action, reward, tuple(float(d) for d in distances))
    logger.debug(f"Domain {domain_id}: a={action.a} p={action.p:.4f} reward={reward:.4f}")
    next_prev = state.current if action.a == 1 else state.prev_selected
    return step, next_prev


def _position_baselines(traces):
    longest = max(len(trace.returns) for trace in traces)
    baselines = []
    for position in range(longest):
        values = [trace.returns[position] for trace in traces if len(trace.returns) > position]
        baselines.append(float(np.mean(values)))
    return baselines


def policy_gradient(P, traces, baseline=False):
    """REINFORCE estimate of the gradient of the expected discounted return.

    This is the discounted form: step T contributes
    gamma^T * G_T * grad log pi(a_T | s_T) rather than G_T alone, which
    makes it the exact gradient of the expected return from the first
    step. Contributions are averaged over the rollouts. With ``baseline``
    the per-position mean return is subtracted from G_T.

    Returns:
        GradientSet
    """
    if not traces:
        raise ConfigurationError("reinforce_update needs at least one rollout")
    if any(trace.returns is None for trace in traces):
        raise ContractError("Every rollout must be finished before the update")

    baselines = _position_baselines(traces) if baseline else None
    states, actions, weights = [], [], []
    for trace in traces:
        for position, (step, G) in enumerate(zip(trace.steps, trace.returns)):
            advantage = G - baselines[position] if baseline else G
            states.append(step.state.vector)
            actions.append(step.action.a)
            weights.append((trace.gamma ** position) * advantage)

    if not states:
        return GradientSet.zeros_like(P)
    states = np.vstack(states)
    _check_policy(P, states.shape[1])
    actions = np.asarray(actions, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)

    acts = forward(P, states)
    p = np.clip(acts[-1][:, 0], PROB_CLAMP, 1.0 - PROB_CLAMP)
    # d log pi / d p
    score = actions / p - (1.0 - actions) / (1.0 - p)
    output_grad = (weights * score / len(traces)).reshape(-1, 1)
    grads, _ = backward(P, acts, output_grad)
    return grads


def reinforce_update(P, traces, rate=POLICY_RATE, baseline=False):
    """Ascend the REINFORCE estimate: theta <- theta + rate * g.

    Returns:
        tuple: (updated policy network, diagnostics dict)
    """
    grads = policy_gradient(P, traces, baseline)
    updated = apply_update(P, grads, rate, ASCENT)
    cumulative = [trace.cumulative_reward for trace in traces]
    diagnostics = {
        'grad_norm': grads.norm(),
        'mean_cumulative_reward': float(np.mean(cumulative)),
        'n_steps': sum(len(trace.steps) for trace in traces),
    }
    return updated, diagnostics


class PolicyGradientStrategy(BaseStrategy):
    """Learned selector: samples from P during training, greedy at extraction."""

    name = 'policy'
    learns = True

    def __init__(self, network, rate=POLICY_RATE, baseline=False):
        """Initialize the strategy with a policy network."""
        self.network = network
        self.rate = rate
        self.baseline = baseline

    def probability(self, state):
        return policy_probability(self.network, state)

    def decide(self, state, rng, greedy=False):
        if greedy:
            return greedy_action(self.network, state)
        return sample_action(self.network, state, rng)

    def policy_network(self, input_dim, hidden):
        return self.network

    def update(self, traces):
        self.network, diagnostics = reinforce_update(self.network, traces, self.rate, self.baseline)
        logger.debug(f"Policy update: grad norm {diagnostics['grad_norm']:.6f}")
        return diagnostics
