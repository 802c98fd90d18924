"""
Tests for the per-sample losses
"""
import numpy as np
import pytest
from scipy.special import log_softmax, softmax

from app.errors import EmptyInputError
from app.nn.losses import (
    cross_entropy,
    gce_loss,
    ipo_logit_loss,
    ipo_loss,
    logistic_margin_loss,
    ncl_loss
)


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


# =====================================================
# CROSS-ENTROPY / GCE / MARGIN
# =====================================================

def test_cross_entropy_of_certain_prediction_is_zero():
    log_probs = np.array([0.0, -np.inf, -np.inf])
    assert cross_entropy(log_probs, 0).value == 0.0


def test_cross_entropy_of_uniform_four_classes():
    log_probs = np.log(np.full(4, 0.25))
    assert cross_entropy(log_probs, 2).value == pytest.approx(1.3863, abs=1e-4)


def test_cross_entropy_rejects_out_of_range_label():
    with pytest.raises(ValueError):
        cross_entropy(np.log(np.full(3, 1 / 3)), 3)


def test_gce_limits():
    probs = softmax(np.random.default_rng(0).normal(size=4))
    # q = 1 is mean absolute error on p_y
    assert gce_loss(probs, 1, q=1.0).value == pytest.approx(1 - probs[1])
    # q -> 0 approaches cross-entropy
    assert gce_loss(probs, 1, q=1e-4).value == pytest.approx(-np.log(probs[1]), abs=2e-3)
    assert gce_loss(np.array([1.0, 0.0]), 0, q=0.7).value == 0.0


def test_gce_rejects_bad_q():
    with pytest.raises(ValueError):
        gce_loss(np.array([0.5, 0.5]), 0, q=0.0)
    with pytest.raises(ValueError):
        gce_loss(np.array([0.5, 0.5]), 0, q=1.5)


def test_gce_is_monotone_and_bounded():
    values = [gce_loss(np.array([p, 1 - p]), 0, q=0.5).value for p in np.linspace(0.01, 0.99, 20)]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert all(0 <= v <= 1 / 0.5 for v in values)


def test_logistic_margin_loss_uses_strongest_rival():
    loss = logistic_margin_loss(np.array([2.0, 1.0, 0.0]), 0)
    assert loss.value == pytest.approx(np.log1p(np.exp(-1.0)))
    assert loss.grads[2] == 0.0
    assert loss.grads[0] == pytest.approx(-loss.grads[1])


# =====================================================
# PREFERENCE
# =====================================================

def test_ipo_equal_preferences():
    assert ipo_loss(-1.0, [-1.0] * 5).value == pytest.approx(5 * np.log(2), abs=1e-4)
    assert ipo_loss(-1.0, [-1.0] * 5).value == pytest.approx(3.4657, abs=1e-4)


def test_ipo_confident_preferences_vanish():
    assert ipo_loss(0.0, [-20.0, -20.0]).value < 1e-8


def test_ipo_mixed_margins():
    assert ipo_loss(0.0, [-1.0, 1.0]).value == pytest.approx(1.6265, abs=1e-4)


def test_ipo_requires_alternatives():
    with pytest.raises(EmptyInputError):
        ipo_loss(0.0, [])


def test_ipo_decreases_with_preferred_log_prob():
    values = [ipo_loss(lp, [-2.0, -3.0]).value for lp in np.linspace(-5, 0, 11)]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_ipo_logit_loss_gradient_sums_to_zero():
    log_probs = log_softmax(np.array([0.3, -0.1, 0.8, 0.0]))
    loss = ipo_logit_loss(log_probs, 0, [2, 3, 2])
    # log-softmax is shift invariant, so the logit gradient has zero sum
    assert loss.grads.sum() == pytest.approx(0.0, abs=1e-12)
    assert loss.value > 0


# =====================================================
# CONTRASTIVE
# =====================================================

def test_ncl_with_equal_similarities():
    anchor = np.array([1.0, 0.0, 0.0])
    rng = np.random.default_rng(0)
    others = np.column_stack((np.zeros(16), rng.normal(size=(16, 2))))
    others /= np.linalg.norm(others, axis=1, keepdims=True)
    loss = ncl_loss(anchor, others[:4], others[4:], tau=0.1)
    assert loss.value == pytest.approx(np.log(16 / 4), abs=1e-9)


def test_ncl_separated_pairs_vanish():
    anchor = _unit([1.0, 0.0])
    positives = np.tile(anchor, (4, 1))
    negatives = np.tile(-anchor, (12, 1))
    assert ncl_loss(anchor, positives, negatives, tau=0.1).value < 1e-8


def test_ncl_single_positive_matches_infonce():
    rng = np.random.default_rng(3)
    vectors = rng.normal(size=(6, 4))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    anchor, positive, negatives = vectors[0], vectors[1], vectors[2:]
    tau = 0.5
    scores = np.concatenate(([positive @ anchor], negatives @ anchor)) / tau
    expected = -np.log(np.exp(scores[0]) / np.exp(scores).sum())
    assert ncl_loss(anchor, positive[None, :], negatives, tau).value == pytest.approx(expected)


def test_ncl_is_permutation_invariant():
    rng = np.random.default_rng(5)
    vectors = rng.normal(size=(10, 3))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    anchor, positives, negatives = vectors[0], vectors[1:4], vectors[4:]
    base = ncl_loss(anchor, positives, negatives).value
    shuffled = ncl_loss(anchor, positives[::-1], negatives[rng.permutation(6)]).value
    assert shuffled == pytest.approx(base)
    assert base >= 0


def test_ncl_without_negatives_is_zero():
    anchor = _unit([1.0, 1.0])
    assert ncl_loss(anchor, np.array([_unit([1.0, 0.0])]), np.zeros((0, 2))).value == pytest.approx(0.0)


def test_ncl_rejects_bad_inputs():
    anchor = _unit([1.0, 0.0])
    with pytest.raises(EmptyInputError):
        ncl_loss(anchor, np.zeros((0, 2)), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        ncl_loss(anchor, anchor[None, :], np.zeros((0, 2)), tau=0.0)
