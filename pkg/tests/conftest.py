"""
Shared fixtures
"""
import numpy as np
import pytest

from app.models.config import AugmentConfig
from app.nn.core import ModelParams, TextEncoder
from app.stream.corpus import generate_synthetic_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_params():
    """Tiny network for finite-difference checks"""
    return ModelParams.initialize(num_classes=4, hash_dim=16, embed_dim=4, hidden_dim=5, seed=1, scale=0.5)


@pytest.fixture
def encoder():
    return TextEncoder(hash_dim=4096, seed=0)


@pytest.fixture
def trainable_params():
    """Small network that learns the synthetic corpus in a few epochs"""
    return ModelParams.initialize(num_classes=4, hash_dim=4096, embed_dim=32, hidden_dim=32, seed=0, scale=0.3)


@pytest.fixture(scope="session")
def four_class_corpus():
    return generate_synthetic_corpus(num_classes=4, docs_per_class=40, vocab_size=200, seed=0, keyword_rate=0.6)


@pytest.fixture
def augment_cfg(four_class_corpus):
    return AugmentConfig(seed=0, synonym_table=four_class_corpus.synonyms)
