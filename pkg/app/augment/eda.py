"""
Token-level Augmentation

The four augmentations that produce contrastive positives: synonym
replacement, random insertion, random swap and random deletion.
"""
import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence

import numpy as np

from app.errors import EmptyInputError
from app.models.config import AugmentConfig
from app.rng import derive_rng
from app.stream.corpus import load_synonyms

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"

SynonymTable = Dict[str, List[str]]


@lru_cache
def load_stopwords() -> FrozenSet[str]:
    """Bundled stopword list"""
    lines = (DATA_DIR / "stopwords.txt").read_text(encoding="utf-8").splitlines()
    return frozenset(w.strip().lower() for w in lines if w.strip() and not w.startswith("#"))


@lru_cache
def _bundled_synonyms() -> Dict[str, tuple]:
    return {k: tuple(v) for k, v in load_synonyms(DATA_DIR / "synonyms.tsv").items()}


def load_default_synonyms() -> SynonymTable:
    """Bundled general-purpose synonym table (a fresh copy)"""
    return {k: list(v) for k, v in _bundled_synonyms().items()}


def synonym_replace(
    tokens: Sequence[str],
    alpha: float,
    table: SynonymTable,
    rng: np.random.Generator,
    stopwords: Optional[FrozenSet[str]] = None
) -> List[str]:
    """
    Replace ceil(alpha * n_nonstop) non-stopwords with a random synonym.

    Tokens without a table entry are never chosen; length is preserved.
    """
    out = list(tokens)
    stopwords = load_stopwords() if stopwords is None else stopwords
    nonstop = [i for i, t in enumerate(out) if t not in stopwords]
    count = math.ceil(alpha * len(nonstop))
    candidates = [i for i in nonstop if table.get(out[i])]
    if count == 0 or not candidates:
        return out

    picks = rng.choice(candidates, size=min(count, len(candidates)), replace=False)
    for i in picks:
        synonyms = table[out[i]]
        out[i] = synonyms[int(rng.integers(len(synonyms)))]
    return out


def random_insert(
    tokens: Sequence[str],
    alpha: float,
    table: SynonymTable,
    rng: np.random.Generator
) -> List[str]:
    """Insert ceil(alpha * n) synonyms of random words at random positions"""
    if len(tokens) == 0:
        raise EmptyInputError("random_insert needs at least one token")
    out = list(tokens)
    sources = [t for t in tokens if table.get(t)]
    if not sources:
        return out
    for _ in range(math.ceil(alpha * len(tokens))):
        word = sources[int(rng.integers(len(sources)))]
        synonyms = table[word]
        out.insert(int(rng.integers(len(out) + 1)), synonyms[int(rng.integers(len(synonyms)))])
    return out


def random_swap(tokens: Sequence[str], n_swaps: int, rng: np.random.Generator) -> List[str]:
    """n_swaps independent swaps of two distinct positions"""
    out = list(tokens)
    if len(out) < 2:
        return out
    for _ in range(n_swaps):
        i, j = rng.choice(len(out), size=2, replace=False)
        out[i], out[j] = out[j], out[i]
    return out


def random_delete(tokens: Sequence[str], p: float, rng: np.random.Generator) -> List[str]:
    """Drop each token with probability p; never returns empty for nonempty input"""
    if not 0 <= p <= 1:
        raise ValueError(f"delete probability must lie in [0, 1], got {p}")
    if len(tokens) == 0:
        return []
    keep = rng.random(len(tokens)) >= p
    if not keep.any():
        return [tokens[int(rng.integers(len(tokens)))]]
    return [t for t, k in zip(tokens, keep) if k]


def augment_all(
    tokens: Sequence[str],
    cfg: AugmentConfig,
    sample_id: int = 0,
    table: Optional[SynonymTable] = None
) -> List[List[str]]:
    """
    One variant per augmentation, in the order replace, insert, swap, delete.

    Every operation draws from its own generator seeded by (cfg.seed,
    sample_id, op index), so variants are reproducible per sample.

    Returns:
        cfg.k token sequences (4 by default)
    """
    if len(tokens) == 0:
        raise EmptyInputError("Cannot augment an empty token sequence")
    table = cfg.synonym_table if table is None else table

    def op_rng(index: int) -> np.random.Generator:
        return derive_rng(cfg.seed, "augment", sample_id, index)

    variants = [
        synonym_replace(tokens, cfg.alpha, table, op_rng(0)),
        random_insert(tokens, cfg.alpha, table, op_rng(1)),
        random_swap(tokens, math.ceil(cfg.swap_rate * len(tokens)), op_rng(2)),
        random_delete(tokens, cfg.delete_prob, op_rng(3))
    ]
    return variants[:cfg.k]
