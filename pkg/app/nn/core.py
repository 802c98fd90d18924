"""
Numerical Core

Hashed n-gram text classifier with exact hand-derived gradients. Two
independent ModelParams instances back the purifier and the primary model.

Layout:
    pooled  = sum_i w_i * embedding[i]          (i over hashed uni/bigrams)
    hidden  = tanh(pooled @ hidden + hidden_bias)
    logits  = hidden @ head + head_bias
    f(x)    = hidden / ||hidden||               (zero vector if hidden == 0)
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.special import log_softmax
from sklearn.utils import murmurhash3_32

from app.errors import EmptyInputError, NonFiniteError, ShapeMismatchError

logger = logging.getLogger(__name__)

DEFAULT_HASH_DIM = 2 ** 14
DEFAULT_EMBED_DIM = 64
DEFAULT_HIDDEN_DIM = 128
DEFAULT_INIT_SCALE = 0.2

TENSOR_NAMES = ("embedding", "hidden", "hidden_bias", "head", "head_bias")


def tokenize(text: str) -> List[str]:
    """Whitespace tokenization with lowercasing"""
    return text.lower().split()


def hash_token(gram: str, hash_dim: int, seed: int = 0) -> int:
    """Bucket of a single unigram or bigram"""
    return murmurhash3_32(gram, seed=seed, positive=True) % hash_dim


# =====================================================
# FEATURES
# =====================================================

@dataclass(frozen=True)
class FeatureVector:
    """Sparse hashed counts of one token sequence"""
    indices: np.ndarray  # sorted, unique, < hash_dim
    weights: np.ndarray  # counts > 0

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def featurize(tokens: Sequence[str], hash_dim: int, seed: int = 0) -> FeatureVector:
    """
    Hash unigrams and bigrams of a token sequence into count buckets.

    Args:
        tokens: Token sequence (nonempty)
        hash_dim: Number of buckets
        seed: Hash seed

    Returns:
        FeatureVector with sorted unique bucket indices
    """
    if len(tokens) == 0:
        raise EmptyInputError("Cannot featurize an empty token sequence")
    if hash_dim < 1:
        raise ValueError(f"hash_dim must be positive, got {hash_dim}")

    # Bigrams join with a space; whitespace tokens never contain one
    grams = list(tokens) + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
    buckets = np.fromiter(
        (hash_token(g, hash_dim, seed) for g in grams),
        dtype=np.int64,
        count=len(grams)
    )
    indices, counts = np.unique(buckets, return_counts=True)
    return FeatureVector(indices=indices, weights=counts.astype(np.float64))


def stack_features(batch: Sequence[FeatureVector], hash_dim: int) -> sp.csr_matrix:
    """Stack feature vectors into a CSR matrix of shape [len(batch), hash_dim]"""
    if len(batch) == 0:
        raise EmptyInputError("Cannot stack an empty batch")
    lengths = np.fromiter((len(fv.indices) for fv in batch), dtype=np.int64, count=len(batch))
    indptr = np.concatenate(([0], np.cumsum(lengths)))
    indices = np.concatenate([fv.indices for fv in batch])
    data = np.concatenate([fv.weights for fv in batch])
    if indices.size and indices.max() >= hash_dim:
        raise ShapeMismatchError(f"Feature index {indices.max()} out of range for hash_dim={hash_dim}")
    return sp.csr_matrix((data, indices, indptr), shape=(len(batch), hash_dim))


class TextEncoder:
    """Featurizes token sequences, caching by content"""

    def __init__(self, hash_dim: int = DEFAULT_HASH_DIM, seed: int = 0):
        self.hash_dim = hash_dim
        self.seed = seed
        self._cache: Dict[Tuple[str, ...], FeatureVector] = {}

    def encode(self, tokens: Sequence[str]) -> FeatureVector:
        key = tuple(tokens)
        cached = self._cache.get(key)
        if cached is None:
            cached = featurize(key, self.hash_dim, self.seed)
            self._cache[key] = cached
        return cached

    def matrix(self, token_lists: Sequence[Sequence[str]]) -> sp.csr_matrix:
        return stack_features([self.encode(t) for t in token_lists], self.hash_dim)


# =====================================================
# PARAMETERS AND GRADIENTS
# =====================================================

@dataclass
class ModelParams:
    """Embedding table plus a two-layer head"""
    embedding: np.ndarray    # [hash_dim, embed_dim]
    hidden: np.ndarray       # [embed_dim, hidden_dim]
    hidden_bias: np.ndarray  # [hidden_dim]
    head: np.ndarray         # [hidden_dim, num_classes]
    head_bias: np.ndarray    # [num_classes]

    @property
    def hash_dim(self) -> int:
        return self.embedding.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.embedding.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.hidden.shape[1]

    @property
    def num_classes(self) -> int:
        return self.head.shape[1]

    @classmethod
    def initialize(
        cls,
        num_classes: int,
        hash_dim: int = DEFAULT_HASH_DIM,
        embed_dim: int = DEFAULT_EMBED_DIM,
        hidden_dim: int = DEFAULT_HIDDEN_DIM,
        seed: int = 0,
        scale: float = DEFAULT_INIT_SCALE
    ) -> "ModelParams":
        """Seeded uniform(-scale, scale) initialization"""
        rng = np.random.default_rng(seed)
        return cls(
            embedding=rng.uniform(-scale, scale, size=(hash_dim, embed_dim)),
            hidden=rng.uniform(-scale, scale, size=(embed_dim, hidden_dim)),
            hidden_bias=rng.uniform(-scale, scale, size=hidden_dim),
            head=rng.uniform(-scale, scale, size=(hidden_dim, num_classes)),
            head_bias=rng.uniform(-scale, scale, size=num_classes)
        )

    @classmethod
    def zeros(
        cls,
        num_classes: int,
        hash_dim: int = DEFAULT_HASH_DIM,
        embed_dim: int = DEFAULT_EMBED_DIM,
        hidden_dim: int = DEFAULT_HIDDEN_DIM
    ) -> "ModelParams":
        return cls(
            embedding=np.zeros((hash_dim, embed_dim)),
            hidden=np.zeros((embed_dim, hidden_dim)),
            hidden_bias=np.zeros(hidden_dim),
            head=np.zeros((hidden_dim, num_classes)),
            head_bias=np.zeros(num_classes)
        )

    def tensors(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TENSOR_NAMES}

    def copy(self) -> "ModelParams":
        return ModelParams(**{name: t.copy() for name, t in self.tensors().items()})

    def validate(self) -> None:
        """Raise if shapes are inconsistent or any entry is non-finite"""
        if self.hidden.shape[0] != self.embed_dim:
            raise ShapeMismatchError(f"hidden has {self.hidden.shape[0]} rows, expected {self.embed_dim}")
        if self.hidden_bias.shape != (self.hidden_dim,):
            raise ShapeMismatchError(f"hidden_bias shape {self.hidden_bias.shape}")
        if self.head.shape[0] != self.hidden_dim:
            raise ShapeMismatchError(f"head has {self.head.shape[0]} rows, expected {self.hidden_dim}")
        if self.head_bias.shape != (self.num_classes,):
            raise ShapeMismatchError(f"head_bias shape {self.head_bias.shape}")
        for name, tensor in self.tensors().items():
            if not np.all(np.isfinite(tensor)):
                raise NonFiniteError(f"Parameter '{name}' contains non-finite values")


@dataclass
class ParamGrads:
    """Gradients with a row-sparse embedding part"""
    embedding_rows: np.ndarray  # sorted unique row ids
    embedding: np.ndarray       # [len(embedding_rows), embed_dim]
    hidden: np.ndarray
    hidden_bias: np.ndarray
    head: np.ndarray
    head_bias: np.ndarray

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "ParamGrads":
        return cls(
            embedding_rows=np.zeros(0, dtype=np.int64),
            embedding=np.zeros((0, params.embed_dim)),
            hidden=np.zeros_like(params.hidden),
            hidden_bias=np.zeros_like(params.hidden_bias),
            head=np.zeros_like(params.head),
            head_bias=np.zeros_like(params.head_bias)
        )

    def __add__(self, other: "ParamGrads") -> "ParamGrads":
        rows = np.union1d(self.embedding_rows, other.embedding_rows)
        embedding = np.zeros((len(rows), self.embedding.shape[1]))
        embedding[np.searchsorted(rows, self.embedding_rows)] += self.embedding
        embedding[np.searchsorted(rows, other.embedding_rows)] += other.embedding
        return ParamGrads(
            embedding_rows=rows,
            embedding=embedding,
            hidden=self.hidden + other.hidden,
            hidden_bias=self.hidden_bias + other.hidden_bias,
            head=self.head + other.head,
            head_bias=self.head_bias + other.head_bias
        )

    def scale(self, factor: float) -> "ParamGrads":
        return ParamGrads(
            embedding_rows=self.embedding_rows.copy(),
            embedding=self.embedding * factor,
            hidden=self.hidden * factor,
            hidden_bias=self.hidden_bias * factor,
            head=self.head * factor,
            head_bias=self.head_bias * factor
        )

    def dense_embedding(self, hash_dim: int) -> np.ndarray:
        dense = np.zeros((hash_dim, self.embedding.shape[1]))
        dense[self.embedding_rows] = self.embedding
        return dense

    def dense(self, hash_dim: int) -> Dict[str, np.ndarray]:
        """All gradients as dense tensors keyed like ModelParams.tensors()"""
        return {
            "embedding": self.dense_embedding(hash_dim),
            "hidden": self.hidden,
            "hidden_bias": self.hidden_bias,
            "head": self.head,
            "head_bias": self.head_bias
        }

    def is_finite(self) -> bool:
        return all(
            np.all(np.isfinite(t))
            for t in (self.embedding, self.hidden, self.hidden_bias, self.head, self.head_bias)
        )


# =====================================================
# FORWARD / BACKWARD
# =====================================================

@dataclass(frozen=True)
class ForwardOutput:
    """Single-sample forward result"""
    logits: np.ndarray     # [num_classes]
    log_probs: np.ndarray  # [num_classes]
    embedding: np.ndarray  # [hidden_dim], unit norm or zero


@dataclass(frozen=True)
class BatchForward:
    """Batch forward result plus the activations backward needs"""
    features: sp.csr_matrix
    pooled: np.ndarray
    hidden: np.ndarray
    norms: np.ndarray
    logits: np.ndarray
    log_probs: np.ndarray
    embeddings: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def row(self, i: int) -> ForwardOutput:
        return ForwardOutput(
            logits=self.logits[i],
            log_probs=self.log_probs[i],
            embedding=self.embeddings[i]
        )


@dataclass(frozen=True)
class UpstreamGrads:
    """Gradient of a scalar loss w.r.t. one ForwardOutput"""
    logits: np.ndarray
    embedding: Optional[np.ndarray] = None


def _check_rows_finite(params: ModelParams, rows: np.ndarray) -> None:
    for name in ("hidden", "hidden_bias", "head", "head_bias"):
        if not np.all(np.isfinite(getattr(params, name))):
            raise NonFiniteError(f"Parameter '{name}' contains non-finite values")
    if not np.all(np.isfinite(params.embedding[rows])):
        raise NonFiniteError("Parameter 'embedding' contains non-finite values")


def forward_batch(params: ModelParams, features: sp.csr_matrix) -> BatchForward:
    """
    Evaluate the classifier on a batch.

    Args:
        params: Model parameters
        features: CSR matrix [batch, hash_dim]

    Returns:
        BatchForward with logits, log-probabilities and unit embeddings
    """
    if features.shape[1] != params.hash_dim:
        raise ShapeMismatchError(
            f"Features have {features.shape[1]} columns, model expects {params.hash_dim}"
        )
    _check_rows_finite(params, np.unique(features.indices))

    pooled = np.asarray(features @ params.embedding)
    hidden = np.tanh(pooled @ params.hidden + params.hidden_bias)
    logits = hidden @ params.head + params.head_bias
    log_probs = log_softmax(logits, axis=1)

    norms = np.linalg.norm(hidden, axis=1)
    embeddings = np.zeros_like(hidden)
    nonzero = norms > 0
    embeddings[nonzero] = hidden[nonzero] / norms[nonzero, None]
    if not nonzero.all():
        logger.warning(f"{int((~nonzero).sum())} sample(s) with zero hidden activation; embedding set to zero")

    return BatchForward(
        features=features,
        pooled=pooled,
        hidden=hidden,
        norms=norms,
        logits=logits,
        log_probs=log_probs,
        embeddings=embeddings
    )


def backward_batch(
    params: ModelParams,
    cache: BatchForward,
    d_logits: Optional[np.ndarray] = None,
    d_embeddings: Optional[np.ndarray] = None
) -> ParamGrads:
    """
    Backpropagate upstream gradients of a scalar loss through a batch.

    Args:
        params: Parameters used for the forward pass
        cache: Result of forward_batch
        d_logits: dL/dlogits, [batch, num_classes] (None = zero)
        d_embeddings: dL/df(x), [batch, hidden_dim] (None = zero)

    Returns:
        Exact parameter gradients, summed over the batch
    """
    batch = cache.hidden.shape[0]
    if d_logits is None:
        d_logits = np.zeros((batch, params.num_classes))
    if d_logits.shape != (batch, params.num_classes):
        raise ShapeMismatchError(f"d_logits shape {d_logits.shape}, expected {(batch, params.num_classes)}")

    d_hidden = d_logits @ params.head.T
    if d_embeddings is not None:
        if d_embeddings.shape != cache.hidden.shape:
            raise ShapeMismatchError(f"d_embeddings shape {d_embeddings.shape}, expected {cache.hidden.shape}")
        # d(h/|h|)/dh = (I - u u^T) / |h|; zero rows carry no gradient
        nonzero = cache.norms > 0
        u = cache.embeddings[nonzero]
        g = d_embeddings[nonzero]
        radial = np.sum(u * g, axis=1, keepdims=True)
        d_hidden[nonzero] += (g - u * radial) / cache.norms[nonzero, None]

    d_pre = d_hidden * (1.0 - cache.hidden ** 2)
    d_pooled = d_pre @ params.hidden.T

    rows = np.unique(cache.features.indices)
    touched = cache.features[:, rows]
    embedding = np.asarray(touched.T @ d_pooled)

    return ParamGrads(
        embedding_rows=rows,
        embedding=embedding,
        hidden=cache.pooled.T @ d_pre,
        hidden_bias=d_pre.sum(axis=0),
        head=cache.hidden.T @ d_logits,
        head_bias=d_logits.sum(axis=0)
    )


def forward(params: ModelParams, x: FeatureVector) -> ForwardOutput:
    """Single-sample forward pass"""
    return forward_batch(params, stack_features([x], params.hash_dim)).row(0)


def backward(params: ModelParams, x: FeatureVector, upstream: UpstreamGrads) -> ParamGrads:
    """Single-sample backward pass for the given upstream gradients"""
    if upstream.logits.shape != (params.num_classes,):
        raise ShapeMismatchError(
            f"Upstream logits gradient shape {upstream.logits.shape}, expected {(params.num_classes,)}"
        )
    if upstream.embedding is not None and upstream.embedding.shape != (params.hidden_dim,):
        raise ShapeMismatchError(
            f"Upstream embedding gradient shape {upstream.embedding.shape}, expected {(params.hidden_dim,)}"
        )
    cache = forward_batch(params, stack_features([x], params.hash_dim))
    d_embeddings = None if upstream.embedding is None else upstream.embedding[None, :]
    return backward_batch(params, cache, upstream.logits[None, :], d_embeddings)


def predict(params: ModelParams, features: sp.csr_matrix) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class index"""
    return np.argmax(forward_batch(params, features).logits, axis=1)


# =====================================================
# OPTIMIZER
# =====================================================

def sgd_step(params: ModelParams, grads: ParamGrads, lr: float) -> ModelParams:
    """
    One plain SGD step; returns new parameters and leaves the input intact.

    Args:
        params: Current parameters
        grads: Gradients of the loss
        lr: Learning rate (>= 0)
    """
    if not np.isfinite(lr) or lr < 0:
        raise ValueError(f"Learning rate must be a finite non-negative number, got {lr}")
    if not grads.is_finite():
        raise NonFiniteError("Gradients contain non-finite values")
    if grads.embedding.shape != (len(grads.embedding_rows), params.embed_dim):
        raise ShapeMismatchError(f"Embedding gradient shape {grads.embedding.shape}")
    for name in ("hidden", "hidden_bias", "head", "head_bias"):
        if getattr(grads, name).shape != getattr(params, name).shape:
            raise ShapeMismatchError(f"Gradient '{name}' shape {getattr(grads, name).shape}")

    updated = params.copy()
    updated.embedding[grads.embedding_rows] -= lr * grads.embedding
    updated.hidden -= lr * grads.hidden
    updated.hidden_bias -= lr * grads.hidden_bias
    updated.head -= lr * grads.head
    updated.head_bias -= lr * grads.head_bias
    return updated
