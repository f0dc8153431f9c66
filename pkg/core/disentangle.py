"""Feature disentanglement: F, I, S, C and the MINE statistic networks.

A shared extractor F feeds an invariant head I and a specific head S. The
invariant features of the three domain roles are pushed to share
information (maximised pairwise MINE estimates), the specific features are
pushed apart (minimised estimates), and the classifier C is trained on the
source invariant features with cross-entropy.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from config.settings import (FEATURE_DIM, FEATURE_HIDDEN, INVARIANT_DIM, INVARIANT_HIDDEN,
                             MINE_HIDDEN, SPECIFIC_DIM, SPECIFIC_HIDDEN)
from core.numerics import (ASCENT, DESCENT, GradientSet, MlpNetwork, apply_update, as_matrix,
                           backward, forward, xavier_init)
from utils.errors import ConfigurationError, DataError, DimensionError
from utils.seeding import derive_seed

logger = logging.getLogger('core.disentangle')

ROLES = ('source', 'intermediate', 'target')
PAIRS = (('source', 'intermediate'), ('source', 'target'), ('intermediate', 'target'))


def pair_key(a, b):
    return f'{a}-{b}'


PAIR_KEYS = tuple(pair_key(a, b) for a, b in PAIRS)


@dataclass(frozen=True)
class NetworkDims:
    """Hidden widths and output sizes of the disentanglement networks."""

    feature_hidden: List[int] = field(default_factory=lambda: list(FEATURE_HIDDEN))
    feature_dim: int = FEATURE_DIM
    invariant_hidden: List[int] = field(default_factory=lambda: list(INVARIANT_HIDDEN))
    invariant_dim: int = INVARIANT_DIM
    specific_hidden: List[int] = field(default_factory=lambda: list(SPECIFIC_HIDDEN))
    specific_dim: int = SPECIFIC_DIM
    mine_hidden: List[int] = field(default_factory=lambda: list(MINE_HIDDEN))


@dataclass
class DisentangleModel:
    """F, I, S, C plus one statistic network per domain pair and feature kind."""

    feature: MlpNetwork
    invariant: MlpNetwork
    specific: MlpNetwork
    classifier: MlpNetwork
    invariant_mine: Dict[str, MlpNetwork]
    specific_mine: Dict[str, MlpNetwork]

    def __post_init__(self):
        shared = self.feature.output_dim
        if self.invariant.input_dim != shared or self.specific.input_dim != shared:
            raise DimensionError(f"I and S must consume F's {shared}-dim output")
        if self.classifier.input_dim != self.invariant.output_dim:
            raise DimensionError("C must consume I's output")
        if self.classifier.output_activation != 'softmax':
            raise ConfigurationError("Classifier needs a softmax head")
        for nets, head in ((self.invariant_mine, self.invariant), (self.specific_mine, self.specific)):
            if set(nets) != set(PAIR_KEYS):
                raise ConfigurationError(f"Statistic networks must cover pairs {PAIR_KEYS}")
            for key, net in nets.items():
                if net.input_dim != 2 * head.output_dim or net.output_dim != 1:
                    raise DimensionError(f"Statistic network {key} must map a feature pair to a scalar")

    @property
    def n_classes(self):
        return self.classifier.output_dim


def build_model(n_features, n_classes, dims=None, seed=0):
    """Xavier-initialised model; every network gets its own derived seed."""
    dims = dims or NetworkDims()
    if n_classes < 2:
        raise ConfigurationError(f"Need at least 2 classes, got {n_classes}")

    def init(index, layer_dims, activation='identity'):
        return xavier_init(layer_dims, derive_seed(seed, index), activation)

    feature = init(0, [n_features, *dims.feature_hidden, dims.feature_dim])
    invariant = init(1, [dims.feature_dim, *dims.invariant_hidden, dims.invariant_dim])
    specific = init(2, [dims.feature_dim, *dims.specific_hidden, dims.specific_dim])
    classifier = init(3, [dims.invariant_dim, n_classes], 'softmax')
    invariant_mine = {key: init(10 + i, [2 * dims.invariant_dim, *dims.mine_hidden, 1])
                      for i, key in enumerate(PAIR_KEYS)}
    specific_mine = {key: init(20 + i, [2 * dims.specific_dim, *dims.mine_hidden, 1])
                     for i, key in enumerate(PAIR_KEYS)}
    return DisentangleModel(feature, invariant, specific, classifier, invariant_mine, specific_mine)


@dataclass(eq=False)
class FeatureBundle:
    """Invariant and specific features of one batch, plus its pooled embedding."""

    f_di: np.ndarray
    f_ds: np.ndarray
    phi: np.ndarray
    domain_id: int
    feature_acts: Optional[list] = field(default=None, repr=False)
    invariant_acts: Optional[list] = field(default=None, repr=False)
    specific_acts: Optional[list] = field(default=None, repr=False)

    @property
    def rows(self):
        return self.f_di.shape[0]


def extract(model, batch, domain_id):
    """f_di = I(F(x)), f_ds = S(F(x)), phi = column mean of f_ds."""
    batch = as_matrix(batch, 'batch')
    if batch.shape[1] != model.feature.input_dim:
        raise DimensionError(
            f"Batch has {batch.shape[1]} features, extractor expects {model.feature.input_dim}")
    feature_acts = forward(model.feature, batch)
    invariant_acts = forward(model.invariant, feature_acts[-1])
    specific_acts = forward(model.specific, feature_acts[-1])
    f_ds = specific_acts[-1]
    return FeatureBundle(f_di=invariant_acts[-1], f_ds=f_ds, phi=f_ds.mean(axis=0),
                         domain_id=int(domain_id), feature_acts=feature_acts,
                         invariant_acts=invariant_acts, specific_acts=specific_acts)


def predict_proba(model, x):
    """Class probabilities C(I(F(x)))."""
    return model.classifier.predict(model.invariant.predict(model.feature.predict(x)))


@dataclass(eq=False)
class MineContext:
    joint_acts: list
    marginal_acts: list
    permutation: np.ndarray
    weights: np.ndarray
    x_dim: int

    @property
    def n(self):
        return self.permutation.shape[0]


def mine_lower_bound(T, x, z, rng):
    """Donsker-Varadhan lower bound on I(X; Z).

    Joint pairs are the aligned rows of ``x`` and ``z``; marginal pairs pair
    ``x`` with a seeded row shuffle of ``z``.

    Returns:
        tuple: (estimate in nats, MineContext for ``mine_backward``)
    """
    x, z = as_matrix(x, 'x'), as_matrix(z, 'z')
    if x.shape[0] != z.shape[0]:
        raise DimensionError(f"x has {x.shape[0]} rows, z has {z.shape[0]}")
    n = x.shape[0]
    if n < 2:
        raise ConfigurationError("MINE needs at least 2 samples to form marginal pairs")
    if T.input_dim != x.shape[1] + z.shape[1] or T.output_dim != 1:
        raise DimensionError(
            f"Statistic network maps {T.input_dim} -> {T.output_dim}, "
            f"pair has {x.shape[1] + z.shape[1]} columns")

    permutation = rng.permutation(n)
    joint_acts = forward(T, np.hstack([x, z]))
    marginal_acts = forward(T, np.hstack([x, z[permutation]]))
    t_joint = joint_acts[-1][:, 0]
    t_marginal = marginal_acts[-1][:, 0]

    # log-mean-exp with max subtraction
    shift = t_marginal.max()
    exp_shifted = np.exp(t_marginal - shift)
    log_mean_exp = shift + np.log(exp_shifted.mean())
    estimate = float(t_joint.mean() - log_mean_exp)
    weights = exp_shifted / exp_shifted.sum()
    return estimate, MineContext(joint_acts, marginal_acts, permutation, weights, x.shape[1])


def mine_backward(T, ctx, upstream=1.0):
    """Gradients of ``upstream * estimate`` w.r.t. T's parameters, x and z."""
    n = ctx.n
    joint_grads, joint_in = backward(T, ctx.joint_acts, np.full((n, 1), upstream / n))
    marginal_grads, marginal_in = backward(T, ctx.marginal_acts,
                                           (-upstream * ctx.weights).reshape(-1, 1))
    grad_x = joint_in[:, :ctx.x_dim] + marginal_in[:, :ctx.x_dim]
    grad_z = joint_in[:, ctx.x_dim:].copy()
    # marginal row i used z[permutation[i]]
    grad_z[ctx.permutation] += marginal_in[:, ctx.x_dim:]
    return joint_grads + marginal_grads, grad_x, grad_z


@dataclass
class MutualInfoLoss:
    """Value of L_mi or L_ms with the gradients it induces.

    ``mine_grads`` are gradients of each pairwise estimate w.r.t. its
    statistic network (ascended to tighten the bound).
    """

    value: float
    estimates: Dict[str, float]
    feature_grads: GradientSet
    head_grads: GradientSet
    mine_grads: Dict[str, GradientSet]


@dataclass
class ClassificationLoss:
    value: float
    classifier_grads: GradientSet
    head_grads: GradientSet
    feature_grads: GradientSet


def _check_bundles(bundles):
    missing = [role for role in ROLES if role not in bundles]
    if missing:
        raise ConfigurationError(f"Missing feature bundles for roles {missing}")
    rows = {role: bundles[role].rows for role in ROLES}
    if len(set(rows.values())) != 1:
        raise DimensionError(f"Pairs are formed row-wise; bundle sizes differ: {rows}")


def _backprop_head(model, bundle, head, grad):
    """Push d loss / d head-output back through the head and F."""
    net, acts = ((model.invariant, bundle.invariant_acts) if head == 'invariant'
                 else (model.specific, bundle.specific_acts))
    head_grads, shared_grad = backward(net, acts, grad)
    feature_grads, _ = backward(model.feature, bundle.feature_acts, shared_grad)
    return head_grads, feature_grads


def _mutual_info_loss(model, bundles, rng, head, sign):
    _check_bundles(bundles)
    nets = model.invariant_mine if head == 'invariant' else model.specific_mine
    features = {role: (bundles[role].f_di if head == 'invariant' else bundles[role].f_ds)
                for role in ROLES}

    estimates, mine_grads = {}, {}
    feature_input_grads = {role: np.zeros_like(features[role]) for role in ROLES}
    for a, b in PAIRS:
        key = pair_key(a, b)
        estimate, ctx = mine_lower_bound(nets[key], features[a], features[b], rng)
        t_grads, grad_a, grad_b = mine_backward(nets[key], ctx)
        estimates[key] = estimate
        mine_grads[key] = t_grads
        feature_input_grads[a] += sign * grad_a
        feature_input_grads[b] += sign * grad_b

    head_net = model.invariant if head == 'invariant' else model.specific
    head_total = GradientSet.zeros_like(head_net)
    feature_total = GradientSet.zeros_like(model.feature)
    for role in ROLES:
        head_grads, feature_grads = _backprop_head(model, bundles[role], head, feature_input_grads[role])
        head_total = head_total + head_grads
        feature_total = feature_total + feature_grads

    value = sign * sum(estimates[key] for key in PAIR_KEYS)
    return MutualInfoLoss(float(value), estimates, feature_total, head_total, mine_grads)


def invariant_loss(model, bundles, rng):
    """L_mi = -(sum of pairwise MI estimates over f_di); minimising it aligns domains."""
    return _mutual_info_loss(model, bundles, rng, 'invariant', -1.0)


def specific_loss(model, bundles, rng):
    """L_ms = sum of pairwise MI estimates over f_ds; minimising it separates domains."""
    return _mutual_info_loss(model, bundles, rng, 'specific', 1.0)


def cross_entropy(probs, labels):
    """Mean negative log-probability of the true class."""
    probs = as_matrix(probs, 'probs')
    labels = np.asarray(labels, dtype=np.int64)
    true_class = probs[np.arange(labels.shape[0]), labels]
    return float(-np.mean(np.log(np.maximum(true_class, np.finfo(np.float64).tiny))))


def classification_loss(model, source, labels):
    """L_ce of C on the source invariant features, with gradients for C, I and F."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != source.rows:
        raise DimensionError(f"Expected {source.rows} labels, got shape {labels.shape}")
    n_classes = model.classifier.output_dim
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise DataError(f"Labels must lie in [0, {n_classes})")
    labels = labels.astype(np.int64)

    acts = forward(model.classifier, source.f_di)
    probs = acts[-1]
    value = cross_entropy(probs, labels)

    n = labels.shape[0]
    rows = np.arange(n)
    output_grad = np.zeros_like(probs)
    output_grad[rows, labels] = -1.0 / (n * np.maximum(probs[rows, labels], np.finfo(np.float64).tiny))
    classifier_grads, f_di_grad = backward(model.classifier, acts, output_grad)
    head_grads, feature_grads = _backprop_head(model, source, 'invariant', f_di_grad)
    return ClassificationLoss(value, classifier_grads, head_grads, feature_grads)


@dataclass(frozen=True)
class StepRates:
    feature: float
    mine: float


@dataclass
class DisentangleReport:
    l_mi: Optional[float]
    l_ms: Optional[float]
    l_ce: float
    invariant_estimates: Dict[str, float] = field(default_factory=dict)
    specific_estimates: Dict[str, float] = field(default_factory=dict)


def classification_step(model, batch, labels, rate, train_feature=True):
    """Descend L_ce of ``labels`` on ``batch`` through I and C, and F unless frozen.

    Returns:
        tuple: (updated DisentangleModel, loss before the update)
    """
    bundle = extract(model, batch, 0)
    ce = classification_loss(model, bundle, labels)
    model = replace(
        model,
        feature=(apply_update(model.feature, ce.feature_grads, rate, DESCENT) if train_feature
                 else model.feature),
        invariant=apply_update(model.invariant, ce.head_grads, rate, DESCENT),
        classifier=apply_update(model.classifier, ce.classifier_grads, rate, DESCENT),
    )
    return model, ce.value


def _ascend_all(nets, grads, rate):
    return {key: apply_update(nets[key], grads[key], rate, ASCENT) for key in PAIR_KEYS}


def disentangle_step(model, source_batch, source_labels, intermediate_batch, target_batch, rates,
                     rng, use_mutual_information=True, domain_ids=(0, 1, 2)):
    """One feature-disentanglement update on a batch triple.

    (a) descend L_mi + L_ce through F, I, C and ascend the invariant-pair
    statistic networks; (b) re-extract and descend L_ms through F, S and
    ascend the specific-pair statistic networks. With
    ``use_mutual_information`` off only L_ce is applied.

    Returns:
        tuple: (updated DisentangleModel, DisentangleReport)
    """
    batches = {'source': as_matrix(source_batch, 'source_batch'),
               'intermediate': as_matrix(intermediate_batch, 'intermediate_batch'),
               'target': as_matrix(target_batch, 'target_batch')}
    sizes = {role: batch.shape[0] for role, batch in batches.items()}
    if use_mutual_information and len(set(sizes.values())) != 1:
        raise DimensionError(f"Batches must have equal size, got {sizes}")
    ids = dict(zip(ROLES, domain_ids))

    bundles = {role: extract(model, batches[role], ids[role]) for role in ROLES}
    ce = classification_loss(model, bundles['source'], source_labels)
    feature_grads, invariant_grads = ce.feature_grads, ce.head_grads
    mi = None
    if use_mutual_information:
        mi = invariant_loss(model, bundles, rng)
        feature_grads = feature_grads + mi.feature_grads
        invariant_grads = invariant_grads + mi.head_grads

    model = replace(
        model,
        feature=apply_update(model.feature, feature_grads, rates.feature, DESCENT),
        invariant=apply_update(model.invariant, invariant_grads, rates.feature, DESCENT),
        classifier=apply_update(model.classifier, ce.classifier_grads, rates.feature, DESCENT),
        invariant_mine=(_ascend_all(model.invariant_mine, mi.mine_grads, rates.mine)
                        if mi is not None else model.invariant_mine),
    )
    if mi is None:
        return model, DisentangleReport(None, None, ce.value)

    bundles = {role: extract(model, batches[role], ids[role]) for role in ROLES}
    ms = specific_loss(model, bundles, rng)
    model = replace(
        model,
        feature=apply_update(model.feature, ms.feature_grads, rates.feature, DESCENT),
        specific=apply_update(model.specific, ms.head_grads, rates.feature, DESCENT),
        specific_mine=_ascend_all(model.specific_mine, ms.mine_grads, rates.mine),
    )
    return model, DisentangleReport(mi.value, ms.value, ce.value, mi.estimates, ms.estimates)
