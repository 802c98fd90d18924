"""
Finite-difference checks of every objective's analytic gradients
"""
import numpy as np
import pytest

from app.nn.core import ModelParams, TextEncoder
from app.nn.objectives import classification_objective, contrastive_objective, preference_objective
from tests.helpers import numeric_grads, relative_errors

HASH_DIM = 16
TOLERANCE = 1e-4


def _instance(seed: int, batch: int = 3):
    rng = np.random.default_rng(seed)
    params = ModelParams.initialize(num_classes=4, hash_dim=HASH_DIM, embed_dim=4, hidden_dim=5, seed=seed, scale=0.5)
    encoder = TextEncoder(hash_dim=HASH_DIM)
    token_lists = [[f"w{v}" for v in rng.integers(0, 12, size=rng.integers(2, 6))] for _ in range(batch)]
    labels = rng.integers(0, 4, size=batch)
    return params, encoder, token_lists, labels, rng


def _assert_close(analytic, loss):
    params = loss.params
    errors = relative_errors(analytic, numeric_grads(loss, params), HASH_DIM)
    assert max(errors.values()) < TOLERANCE, errors


class _Loss:
    """Callable scalar objective bound to a parameter set"""

    def __init__(self, params, fn):
        self.params = params
        self.fn = fn

    def __call__(self, params):
        return self.fn(params).value


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("loss,q", [("ce", 0.7), ("gce", 0.3), ("gce", 0.7), ("gce", 1.0), ("logistic_margin", 0.7)])
def test_classification_gradients(seed, loss, q):
    params, encoder, token_lists, labels, _ = _instance(seed)
    features = encoder.matrix(token_lists)
    fn = lambda p: classification_objective(p, features, labels, loss=loss, q=q)
    _assert_close(fn(params).grads, _Loss(params, fn))


@pytest.mark.parametrize("seed", range(5))
def test_preference_gradients(seed):
    params, encoder, token_lists, labels, rng = _instance(seed)
    features = encoder.matrix(token_lists)
    alternatives = [[int(c) for c in rng.choice([c for c in range(4) if c != y], size=5)] for y in labels]
    fn = lambda p: preference_objective(p, features, labels, alternatives)
    _assert_close(fn(params).grads, _Loss(params, fn))


@pytest.mark.parametrize("seed", range(5))
def test_contrastive_gradients(seed):
    params, encoder, token_lists, _, rng = _instance(seed)
    k = 4
    variants = [
        [t for t in tokens if rng.random() > 0.3] or list(tokens)
        for tokens in token_lists for _ in range(k)
    ]
    anchors = encoder.matrix(token_lists)
    variant_features = encoder.matrix(variants)
    fn = lambda p: contrastive_objective(p, anchors, variant_features, k=k, tau=0.1)
    _assert_close(fn(params).grads, _Loss(params, fn))


def test_contrastive_objective_ignores_the_head():
    params, encoder, token_lists, _, _ = _instance(0)
    anchors = encoder.matrix(token_lists)
    result = contrastive_objective(params, anchors, encoder.matrix(token_lists * 1), k=1)
    assert not result.grads.head.any()
    assert not result.grads.head_bias.any()


SLOW_SEEDS = range(1000, 1100)


@pytest.mark.slow
@pytest.mark.parametrize("seed", SLOW_SEEDS)
@pytest.mark.parametrize("loss,q", [("ce", 0.7), ("gce", 0.3), ("gce", 0.7), ("gce", 1.0)])
def test_classification_gradients_many_instances(seed, loss, q):
    test_classification_gradients(seed, loss, q)


@pytest.mark.slow
@pytest.mark.parametrize("seed", SLOW_SEEDS)
def test_preference_gradients_many_instances(seed):
    test_preference_gradients(seed)


@pytest.mark.slow
@pytest.mark.parametrize("seed", SLOW_SEEDS)
def test_contrastive_gradients_many_instances(seed):
    test_contrastive_gradients(seed)
