"""Gradual self-training along a transfer path.

Joint training only ever shows C source labels. Walking the selected
intermediates in path order and then the target, each domain is labelled
by the current model, the least confident rows of every predicted class are
dropped and I, C are fitted to the rest before moving on. F stays fixed, so
the domain-specific embeddings and the extracted path do not change.
"""
import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from config.settings import ADAPT_KEEP, ADAPT_STEPS, BATCH_SIZE, FEATURE_RATE
from core.disentangle import classification_step, predict_proba
from utils.errors import ConfigurationError, DivergenceError, NumericalError

logger = logging.getLogger('core.adaptation')


@dataclass
class AdaptationHop:
    domain_id: int
    kept_rows: int
    first_loss: float
    last_loss: float


@dataclass
class AdaptationReport:
    hops: List[AdaptationHop] = field(default_factory=list)

    @property
    def domain_ids(self):
        return [hop.domain_id for hop in self.hops]


def pseudo_label(model, features, keep=ADAPT_KEEP):
    """Label rows with the model's argmax and keep the most confident ones.

    Within each predicted class the ``keep`` fraction with the highest
    winning probability survives (at least one row per class).

    Returns:
        tuple: (kept row indices in ascending order, their pseudo-labels)
    """
    if not 0.0 < keep <= 1.0:
        raise ConfigurationError(f"keep must lie in (0, 1], got {keep}")
    probs = predict_proba(model, features)
    labels = np.argmax(probs, axis=1)
    confidence = probs[np.arange(labels.shape[0]), labels]
    kept = []
    for label in np.unique(labels):
        rows = np.flatnonzero(labels == label)
        count = max(1, int(np.ceil(keep * rows.shape[0])))
        # stable sort keeps ties in row order
        order = np.argsort(-confidence[rows], kind='stable')
        kept.append(rows[order[:count]])
    kept = np.sort(np.concatenate(kept))
    return kept, labels[kept]


def self_train(model, features, rng, steps=ADAPT_STEPS, keep=ADAPT_KEEP, batch_size=BATCH_SIZE,
               rate=FEATURE_RATE, domain_id=0):
    """Pseudo-label one domain once, then fit I, C to it for ``steps`` minibatches.

    Returns:
        tuple: (updated model, AdaptationHop)
    """
    kept, labels = pseudo_label(model, features, keep)
    x = np.asarray(features, dtype=np.float64)[kept]
    size = min(batch_size, kept.shape[0])
    first_loss = last_loss = float('nan')
    for step in range(steps):
        idx = rng.choice(kept.shape[0], size=size, replace=False)
        try:
            model, last_loss = classification_step(model, x[idx], labels[idx], rate, train_feature=False)
        except NumericalError as e:
            raise DivergenceError(f"{e} while self-training on domain {domain_id}, step {step}",
                                  step=step) from e
        if step == 0:
            first_loss = last_loss
    return model, AdaptationHop(int(domain_id), int(kept.shape[0]), float(first_loss), float(last_loss))


def adapt_along_path(model, domains_in_order, rng, steps=ADAPT_STEPS, keep=ADAPT_KEEP,
                     batch_size=BATCH_SIZE, rate=FEATURE_RATE):
    """Self-train on each domain of ``domains_in_order`` in turn.

    ``domains_in_order`` is the selected intermediates in path order followed
    by the target. Zero ``steps`` leaves the model untouched.

    Returns:
        tuple: (updated model, AdaptationReport)
    """
    report = AdaptationReport()
    if steps == 0:
        return model, report
    for domain in domains_in_order:
        model, hop = self_train(model, domain.features, rng, steps, keep, batch_size, rate,
                                domain_id=domain.domain_id)
        report.hops.append(hop)
        logger.debug(f"Self-trained on domain {domain.domain_id}: kept {hop.kept_rows} rows, "
                     f"loss {hop.first_loss:.4f} -> {hop.last_loss:.4f}")
    return model, report
