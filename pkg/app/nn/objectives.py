"""
Batch objectives

Mean losses over a batch with exact gradients, composed from the per-sample
losses and the network's backward pass.
"""
from dataclasses import dataclass
from typing import Iterator, List, Sequence

import numpy as np
import scipy.sparse as sp

from app.nn.core import ModelParams, ParamGrads, backward_batch, forward_batch
from app.nn.losses import (
    DEFAULT_GCE_Q,
    DEFAULT_TEMPERATURE,
    cross_entropy,
    gce_loss,
    ipo_logit_loss,
    logistic_margin_loss,
    ncl_loss
)

CLASSIFICATION_LOSSES = ("ce", "gce", "logistic_margin")


@dataclass(frozen=True)
class ObjectiveResult:
    """Mean batch loss and its parameter gradients"""
    value: float
    grads: ParamGrads


@dataclass
class PhaseResult:
    """Parameters after a training phase and its mean loss per epoch"""
    params: ModelParams
    losses: List[float]


def minibatch_indices(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """One shuffled pass over range(n) in chunks of batch_size"""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def classification_objective(
    params: ModelParams,
    features: sp.csr_matrix,
    labels: Sequence[int],
    loss: str = "ce",
    q: float = DEFAULT_GCE_Q
) -> ObjectiveResult:
    """
    Mean classification loss over a batch.

    Args:
        params: Model parameters
        features: CSR batch [b, hash_dim]
        labels: Target class per row
        loss: "ce", "gce" or "logistic_margin"
        q: GCE exponent (used by "gce" only)
    """
    if loss not in CLASSIFICATION_LOSSES:
        raise ValueError(f"Unknown classification loss '{loss}'")
    cache = forward_batch(params, features)
    probs = cache.probs
    d_logits = np.zeros_like(cache.logits)
    total = 0.0

    for i, y in enumerate(labels):
        if loss == "ce":
            value = cross_entropy(cache.log_probs[i], int(y))
        elif loss == "gce":
            value = gce_loss(probs[i], int(y), q)
        else:
            value = logistic_margin_loss(cache.logits[i], int(y))
        total += value.value
        d_logits[i] = value.grads

    batch = len(labels)
    grads = backward_batch(params, cache, d_logits / batch)
    return ObjectiveResult(value=total / batch, grads=grads)


def preference_objective(
    params: ModelParams,
    features: sp.csr_matrix,
    labels: Sequence[int],
    alternatives: Sequence[Sequence[int]]
) -> ObjectiveResult:
    """Mean IPO loss; row i prefers labels[i] over each of alternatives[i]"""
    cache = forward_batch(params, features)
    d_logits = np.zeros_like(cache.logits)
    total = 0.0

    for i, (y, alts) in enumerate(zip(labels, alternatives)):
        value = ipo_logit_loss(cache.log_probs[i], int(y), alts)
        total += value.value
        d_logits[i] = value.grads

    batch = len(labels)
    grads = backward_batch(params, cache, d_logits / batch)
    return ObjectiveResult(value=total / batch, grads=grads)


def contrastive_objective(
    params: ModelParams,
    anchors: sp.csr_matrix,
    variants: sp.csr_matrix,
    k: int,
    tau: float = DEFAULT_TEMPERATURE
) -> ObjectiveResult:
    """
    Mean multi-positive contrastive loss over a batch of anchors.

    Row i*k + j of `variants` is augmentation j of anchor i. For each
    anchor the positives are its own k variants and the negatives are every
    other anchor together with that anchor's variants. Labels are never
    involved.
    """
    batch = anchors.shape[0]
    if variants.shape[0] != batch * k:
        raise ValueError(f"Expected {batch * k} variant rows, got {variants.shape[0]}")

    cache = forward_batch(params, sp.vstack([anchors, variants], format="csr"))
    embeddings = cache.embeddings
    owner = np.concatenate((np.arange(batch), np.repeat(np.arange(batch), k)))
    d_embeddings = np.zeros_like(embeddings)
    total = 0.0

    for i in range(batch):
        positive_rows = batch + i * k + np.arange(k)
        negative_rows = np.flatnonzero(owner != i)
        value = ncl_loss(
            embeddings[i], embeddings[positive_rows], embeddings[negative_rows], tau
        )
        total += value.value
        d_embeddings[i] += value.grads
        d_embeddings[positive_rows] += value.positive_grads
        d_embeddings[negative_rows] += value.negative_grads

    grads = backward_batch(params, cache, None, d_embeddings / batch)
    return ObjectiveResult(value=total / batch, grads=grads)
