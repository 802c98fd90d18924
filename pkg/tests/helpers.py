"""
Shared test utilities
"""
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from app.models.config import ExperimentConfig
from app.models.sample import Sample
from app.nn.core import TENSOR_NAMES, ModelParams, ParamGrads


def make_sample(
    sample_id: int,
    tokens: Sequence[str] = ("a", "b"),
    y_true: int = 0,
    y: Optional[int] = None,
    task_id: int = 0
) -> Sample:
    y = y_true if y is None else y
    return Sample(id=sample_id, tokens=tuple(tokens), y_true=y_true, y=y, task_id=task_id, is_noisy=y != y_true)


def numeric_grads(loss: Callable[[ModelParams], float], params: ModelParams, h: float = 1e-4) -> Dict[str, np.ndarray]:
    """Central finite differences of a scalar function of the parameters"""
    grads = {}
    for name in TENSOR_NAMES:
        tensor = getattr(params, name)
        grad = np.zeros_like(tensor)
        for idx in np.ndindex(tensor.shape):
            original = tensor[idx]
            tensor[idx] = original + h
            up = loss(params)
            tensor[idx] = original - h
            down = loss(params)
            tensor[idx] = original
            grad[idx] = (up - down) / (2 * h)
        grads[name] = grad
    return grads


def relative_errors(analytic: ParamGrads, numeric: Dict[str, np.ndarray], hash_dim: int) -> Dict[str, float]:
    dense = analytic.dense(hash_dim)
    return {
        name: float(np.linalg.norm(dense[name] - numeric[name]) / (np.linalg.norm(numeric[name]) + 1e-8))
        for name in TENSOR_NAMES
    }


def tiny_config(output_dir, **sections) -> ExperimentConfig:
    """A two-task experiment small enough to run in a unit test"""
    data = {
        "method": "ricl",
        "seeds": [0],
        "output_dir": str(output_dir),
        "stream": {"num_tasks": 2, "classes_per_task": 2, "delay_buffer_size": 40, "noise_rate": 0.2},
        "corpus": {"docs_per_class": 40, "vocab_size": 200},
        "model": {"hash_dim": 1024, "embed_dim": 8, "hidden_dim": 16, "init_scale": 0.3},
        "purifier": {"epochs": 1},
        "train": {"epochs": 1, "batch_size": 16},
        "buffers": {"clean_capacity": 40, "noisy_capacity": 40, "replay_clean_capacity": 60, "replay_noisy_capacity": 60},
    }
    for key, value in sections.items():
        if isinstance(value, dict):
            data[key] = {**data.get(key, {}), **value}
        else:
            data[key] = value
    return ExperimentConfig.model_validate(data)


def corpus_samples(corpus, noise_every: int = 0, num_classes: int = 4) -> list:
    """Samples of a corpus; every noise_every-th label is shifted to the next class"""
    samples = []
    for i, (doc, y) in enumerate(zip(corpus.documents, corpus.label_indices())):
        y_fed = (y + 1) % num_classes if noise_every and i % noise_every == 0 else y
        samples.append(make_sample(i, doc.text.split(), y_true=y, y=y_fed))
    return samples


def head_bias_params(bias, hash_dim: int = 4096) -> ModelParams:
    """A model whose logits equal `bias` for every input"""
    params = ModelParams.zeros(num_classes=len(bias), hash_dim=hash_dim, embed_dim=2, hidden_dim=2)
    params.head_bias[:] = bias
    return params
