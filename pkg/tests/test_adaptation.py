import numpy as np
import pytest

from core.adaptation import adapt_along_path, pseudo_label, self_train
from core.disentangle import build_model, classification_step, predict_proba
from data.synthetic import generate_rotated_gaussians
from utils.errors import ConfigurationError
from utils.seeding import make_rng


@pytest.fixture
def model():
    return build_model(2, 2, seed=7)


def test_pseudo_label_keeps_most_confident_rows_per_class(model):
    x = make_rng(0).normal(size=(40, 2))
    probs = predict_proba(model, x)
    predicted = np.argmax(probs, axis=1)
    kept, labels = pseudo_label(model, x, keep=0.5)

    assert np.all(np.diff(kept) > 0)
    np.testing.assert_array_equal(labels, predicted[kept])
    confidence = probs.max(axis=1)
    for label in np.unique(predicted):
        rows = np.flatnonzero(predicted == label)
        chosen = np.intersect1d(rows, kept)
        assert chosen.shape[0] == int(np.ceil(0.5 * rows.shape[0]))
        dropped = np.setdiff1d(rows, kept)
        if dropped.size:
            assert confidence[chosen].min() >= confidence[dropped].max()


def test_pseudo_label_keep_bounds(model):
    x = make_rng(1).normal(size=(10, 2))
    kept, _ = pseudo_label(model, x, keep=1.0)
    np.testing.assert_array_equal(kept, np.arange(10))
    for keep in (0.0, 1.5):
        with pytest.raises(ConfigurationError):
            pseudo_label(model, x, keep=keep)


def test_self_train_leaves_feature_extractor_alone(model):
    x = make_rng(2).normal(size=(30, 2))
    adapted, hop = self_train(model, x, make_rng(3), steps=5, keep=0.8, batch_size=8, rate=0.1, domain_id=4)
    for before, after in zip(model.feature.weights + model.specific.weights,
                             adapted.feature.weights + adapted.specific.weights):
        np.testing.assert_array_equal(before, after)
    assert not np.array_equal(model.classifier.weights[0], adapted.classifier.weights[0])
    assert hop.domain_id == 4 and 0 < hop.kept_rows <= 30
    assert np.isfinite(hop.first_loss) and np.isfinite(hop.last_loss)


def test_adapt_along_path_visits_domains_in_order(model):
    domains = generate_rotated_gaussians(30, [0.0, 30.0, 60.0, 90.0], 0.1, seed=0)
    hops = [domains[2], domains[1], domains[3]]
    _, report = adapt_along_path(model, hops, make_rng(4), steps=3, batch_size=8)
    assert report.domain_ids == [2, 1, 3]

    unchanged, report = adapt_along_path(model, hops, make_rng(4), steps=0)
    assert unchanged is model and report.hops == []


@pytest.mark.slow
def test_self_training_follows_a_slow_rotation():
    domains = generate_rotated_gaussians(200, [float(a) for a in range(0, 181, 15)], 0.1, seed=1)
    source = domains[0]
    model = build_model(2, 2, seed=2)
    rng = make_rng(5)
    for _ in range(300):
        idx = rng.choice(source.n, size=64, replace=False)
        model, _ = classification_step(model, source.features[idx], source.labels[idx], 0.1)
    target = domains[-1]
    before = np.mean(np.argmax(predict_proba(model, target.features), axis=1) == target.eval_labels)

    adapted, _ = adapt_along_path(model, domains[1:], rng, steps=200, batch_size=64, rate=0.1)
    after = np.mean(np.argmax(predict_proba(adapted, target.features), axis=1) == target.eval_labels)
    assert before < 0.2
    assert after > 0.8
