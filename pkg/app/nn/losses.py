"""
Training Objectives

Scalar losses with gradients w.r.t. their inputs. Classification losses
return gradients w.r.t. the logits that produced the probabilities, so
they plug straight into backward_batch.
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit, log_expit, logsumexp, softmax

from app.errors import EmptyInputError, ShapeMismatchError

DEFAULT_GCE_Q = 0.7
DEFAULT_TEMPERATURE = 0.1


@dataclass(frozen=True)
class LossValue:
    """Loss value and its gradient"""
    value: float
    grads: np.ndarray


@dataclass(frozen=True)
class ContrastiveLossValue(LossValue):
    """Contrastive loss; `grads` is w.r.t. the anchor"""
    positive_grads: np.ndarray
    negative_grads: np.ndarray


def _check_class(y: int, num_classes: int) -> None:
    if not 0 <= y < num_classes:
        raise ValueError(f"Class index {y} out of range [0, {num_classes})")


def log_prob_grads_to_logits(log_probs: np.ndarray, d_log_probs: np.ndarray) -> np.ndarray:
    """Chain dL/dlog_softmax(z) into dL/dz"""
    return d_log_probs - np.exp(log_probs) * d_log_probs.sum()


# =====================================================
# CLASSIFICATION
# =====================================================

def cross_entropy(log_probs: np.ndarray, y: int) -> LossValue:
    """
    Negative log-likelihood of class y.

    Returns:
        LossValue with gradient w.r.t. the logits
    """
    _check_class(y, len(log_probs))
    grads = np.exp(log_probs)
    grads[y] -= 1.0
    return LossValue(value=float(-log_probs[y]), grads=grads)


def gce_loss(probs: np.ndarray, y: int, q: float = DEFAULT_GCE_Q) -> LossValue:
    """
    Generalized cross-entropy (1 - p_y^q) / q.

    Interpolates cross-entropy (q -> 0) and mean absolute error (q = 1).

    Returns:
        LossValue with gradient w.r.t. the logits
    """
    if not 0 < q <= 1:
        raise ValueError(f"GCE q must lie in (0, 1], got {q}")
    _check_class(y, len(probs))
    p_y = float(probs[y])
    p_y_q = p_y ** q
    # dL/dp_y = -p_y^(q-1); dp_y/dz = p_y (e_y - p)
    onehot = np.zeros_like(probs)
    onehot[y] = 1.0
    grads = -p_y_q * (onehot - probs)
    return LossValue(value=(1.0 - p_y_q) / q, grads=grads)


def logistic_margin_loss(logits: np.ndarray, y: int) -> LossValue:
    """
    softplus(-margin) with margin = z_y - max_{c != y} z_c.

    Multi-class margin alternative to GCE for the purifier; large when the
    given label loses to its strongest rival.

    Returns:
        LossValue with gradient w.r.t. the logits
    """
    if len(logits) < 2:
        raise ValueError("Margin loss needs at least two classes")
    _check_class(y, len(logits))
    rivals = np.delete(np.arange(len(logits)), y)
    rival = int(rivals[np.argmax(logits[rivals])])
    margin = float(logits[y] - logits[rival])
    slope = float(expit(-margin))
    grads = np.zeros_like(logits)
    grads[y] = -slope
    grads[rival] = slope
    return LossValue(value=float(np.logaddexp(0.0, -margin)), grads=grads)


# =====================================================
# PREFERENCE
# =====================================================

def ipo_loss(log_p_y: float, log_p_alts: Sequence[float]) -> LossValue:
    """
    Reference-free preference loss -sum_j log sigmoid(log p_y - log p_alt_j).

    Returns:
        LossValue whose grads are [dL/dlog_p_y, dL/dlog_p_alt_1, ..., dL/dlog_p_alt_L]
    """
    alts = np.asarray(log_p_alts, dtype=np.float64)
    if alts.size == 0:
        raise EmptyInputError("IPO loss needs at least one alternative label")
    if not (np.isfinite(log_p_y) and np.all(np.isfinite(alts))):
        raise ValueError("IPO inputs must be finite")
    delta = log_p_y - alts
    value = float(-np.sum(log_expit(delta)))
    # d(-log sigmoid(d))/dd = -sigmoid(-d)
    slopes = expit(-delta)
    grads = np.concatenate(([-slopes.sum()], slopes))
    return LossValue(value=value, grads=grads)


def ipo_logit_loss(log_probs: np.ndarray, y: int, alternatives: Sequence[int]) -> LossValue:
    """IPO loss for one sample with gradient w.r.t. its logits"""
    _check_class(y, len(log_probs))
    alternatives = np.asarray(alternatives, dtype=np.int64)
    loss = ipo_loss(float(log_probs[y]), log_probs[alternatives])
    d_log_probs = np.zeros_like(log_probs)
    d_log_probs[y] += loss.grads[0]
    np.add.at(d_log_probs, alternatives, loss.grads[1:])
    return LossValue(value=loss.value, grads=log_prob_grads_to_logits(log_probs, d_log_probs))


# =====================================================
# CONTRASTIVE
# =====================================================

def ncl_loss(
    anchor: np.ndarray,
    positives: np.ndarray,
    negatives: np.ndarray,
    tau: float = DEFAULT_TEMPERATURE
) -> ContrastiveLossValue:
    """
    Multi-positive InfoNCE with the temperature inside the exponent.

    Embeddings are unit-norm or zero, so similarity is their dot product
    (the cosine, and 0 against a zero vector).

    Args:
        anchor: [d]
        positives: [k, d], k >= 1
        negatives: [m, d], m >= 0
        tau: Temperature > 0
    """
    if tau <= 0:
        raise ValueError(f"Temperature must be positive, got {tau}")
    positives = np.atleast_2d(np.asarray(positives, dtype=np.float64))
    if positives.shape[0] == 0 or positives.size == 0:
        raise EmptyInputError("Contrastive loss needs at least one positive")
    negatives = np.asarray(negatives, dtype=np.float64).reshape(-1, anchor.shape[0])
    if positives.shape[1] != anchor.shape[0]:
        raise ShapeMismatchError(f"Positive dim {positives.shape[1]} != anchor dim {anchor.shape[0]}")

    pos_scores = positives @ anchor / tau
    neg_scores = negatives @ anchor / tau
    all_scores = np.concatenate((pos_scores, neg_scores))
    value = float(logsumexp(all_scores) - logsumexp(pos_scores))

    total = softmax(all_scores)
    d_pos = total[:len(pos_scores)] - softmax(pos_scores)
    d_neg = total[len(pos_scores):]
    return ContrastiveLossValue(
        value=max(value, 0.0),
        grads=(positives.T @ d_pos + negatives.T @ d_neg) / tau,
        positive_grads=np.outer(d_pos, anchor) / tau,
        negative_grads=np.outer(d_neg, anchor) / tau
    )
