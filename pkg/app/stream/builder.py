"""
Stream Builder

Turns a labeled corpus into the interactive stream: class-to-task partition,
held-out test splits, blurry task boundaries, symmetric label noise and
delay-buffer delivery with model-generated labels.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.errors import EmptyInputError, InsufficientDataError
from app.models.config import StreamConfig
from app.models.sample import LabeledCorpus, Sample, TaskSpec
from app.nn.core import ModelParams, TextEncoder, predict, tokenize
from app.rng import derive_rng

logger = logging.getLogger(__name__)


# =====================================================
# TASK CONSTRUCTION
# =====================================================

def partition_tasks(corpus: LabeledCorpus, cfg: StreamConfig) -> List[TaskSpec]:
    """
    Assign classes to tasks by a seeded shuffle without replacement.

    Every sample of a primary class lands in that class's task. Classes
    left over after num_tasks * classes_per_task are not streamed.

    Args:
        corpus: Labeled corpus
        cfg: Stream settings (num_tasks, classes_per_task, seed)

    Returns:
        One TaskSpec per task, samples in seeded random order
    """
    labels = corpus.label_names()
    needed = cfg.num_tasks * cfg.classes_per_task
    if len(labels) < needed:
        raise InsufficientDataError(
            f"{cfg.num_tasks} tasks x {cfg.classes_per_task} classes needs {needed} classes, "
            f"corpus has {len(labels)}"
        )

    rng = derive_rng(cfg.seed, "partition")
    class_order = rng.permutation(len(labels))
    task_of: Dict[int, int] = {}
    for t in range(cfg.num_tasks):
        for c in class_order[t * cfg.classes_per_task:(t + 1) * cfg.classes_per_task]:
            task_of[int(c)] = t

    pools: List[List[Sample]] = [[] for _ in range(cfg.num_tasks)]
    skipped = 0
    for sample_id, (doc, y) in enumerate(zip(corpus.documents, corpus.label_indices())):
        if y not in task_of:
            continue
        tokens = tuple(tokenize(doc.text))
        if not tokens:
            skipped += 1
            continue
        t = task_of[y]
        pools[t].append(Sample(id=sample_id, tokens=tokens, y_true=y, y=y, task_id=t))
    if skipped:
        logger.warning(f"Skipped {skipped} document(s) with no tokens")
    if len(labels) > needed:
        logger.info(f"{len(labels) - needed} class(es) left out of the task sequence")

    tasks = []
    for t, pool in enumerate(pools):
        order = rng.permutation(len(pool))
        tasks.append(TaskSpec(
            task_id=t,
            primary_classes=sorted(int(c) for c, task in task_of.items() if task == t),
            samples=[pool[i] for i in order]
        ))
    return tasks


def split_test(
    tasks: Sequence[TaskSpec],
    fraction: float,
    seed: int
) -> Tuple[List[TaskSpec], Dict[int, List[Sample]]]:
    """
    Hold out a stratified fraction of each task's primary samples for evaluation.

    Runs before blur and noise, so every held-out sample carries y == y_true.

    Returns:
        (training tasks, {task_id: test samples})
    """
    if not 0 < fraction < 1:
        raise ValueError(f"test fraction must lie in (0, 1), got {fraction}")
    rng = derive_rng(seed, "test_split")
    train_tasks: List[TaskSpec] = []
    test_sets: Dict[int, List[Sample]] = {}

    for task in tasks:
        held_out = set()
        for c in task.primary_classes:
            ids = [s.id for s in task.samples if s.y_true == c]
            if len(ids) < 2:
                raise InsufficientDataError(f"Class {c} of task {task.task_id} has fewer than 2 samples")
            n_test = min(len(ids) - 1, max(1, int(round(fraction * len(ids)))))
            held_out.update(rng.choice(ids, size=n_test, replace=False).tolist())
        test_sets[task.task_id] = [s for s in task.samples if s.id in held_out]
        train_tasks.append(task.model_copy(update={
            "samples": [s for s in task.samples if s.id not in held_out]
        }))
    return train_tasks, test_sets


def _assign_slots(homes: np.ndarray, slots: np.ndarray) -> np.ndarray:
    """
    Repair a donor-to-slot matching so no sample returns to its home task.

    Returns:
        Boolean mask of donations that found a foreign slot
    """
    placed = homes != slots
    for i in np.flatnonzero(~placed):
        if placed[i]:
            continue
        for j in range(len(slots)):
            if j != i and homes[j] != slots[i] and homes[i] != slots[j]:
                slots[i], slots[j] = slots[j], slots[i]
                placed[i] = True
                placed[j] = True
                break
    return placed


def apply_blur(tasks: Sequence[TaskSpec], r: float, seed: int) -> List[TaskSpec]:
    """
    Blur task boundaries.

    Each task donates round(r * n_t) of its samples to other tasks and
    receives the same number, so the sequence keeps every sample exactly
    once and each task's final secondary fraction is r.

    Args:
        tasks: Disjoint tasks from partition_tasks / split_test
        r: Blur rate in [0, 1)
        seed: Stream seed

    Returns:
        Tasks with secondary classes and achieved_blur filled in
    """
    if not 0 <= r < 1:
        raise ValueError(f"blur rate must lie in [0, 1), got {r}")
    if r == 0:
        return [task.model_copy(update={"achieved_blur": 0.0}) for task in tasks]

    rng = derive_rng(seed, "blur")
    kept: List[List[Sample]] = []
    donated: List[Sample] = []
    quotas: List[int] = []
    for task in tasks:
        quota = int(round(r * len(task.samples)))
        picks = set(rng.choice(len(task.samples), size=quota, replace=False).tolist())
        kept.append([s for i, s in enumerate(task.samples) if i not in picks])
        donated.extend(s for i, s in enumerate(task.samples) if i in picks)
        quotas.append(quota)

    positions = {task.task_id: pos for pos, task in enumerate(tasks)}
    homes = np.array([positions[s.task_id] for s in donated], dtype=np.int64)
    slots = rng.permutation(np.repeat(np.arange(len(tasks)), quotas))
    placed = _assign_slots(homes, slots)
    if not placed.all():
        logger.warning(f"Blur: {int((~placed).sum())} sample(s) had no foreign slot and stay in their task")

    received: List[List[Sample]] = [[] for _ in tasks]
    for sample, home, slot, ok in zip(donated, homes, slots, placed):
        target = int(slot) if ok else int(home)
        received[target].append(sample.model_copy(update={"task_id": tasks[target].task_id}))

    blurred = []
    for pos, task in enumerate(tasks):
        samples = kept[pos] + received[pos]
        samples = [samples[i] for i in rng.permutation(len(samples))]
        primary = set(task.primary_classes)
        secondary = sorted({s.y_true for s in samples if s.y_true not in primary})
        spec = task.model_copy(update={"samples": samples, "secondary_classes": secondary})
        blurred.append(spec.model_copy(update={"achieved_blur": spec.secondary_fraction()}))
        logger.debug(f"Task {task.task_id}: blur {blurred[-1].achieved_blur:.3f} over {len(samples)} samples")
    return blurred


def inject_noise(tasks: Sequence[TaskSpec], rho: float, seed: int) -> List[TaskSpec]:
    """
    Symmetric label noise within each task.

    Each sample flips with probability rho to a uniformly chosen other class
    of its task (primary or secondary). Tokens and y_true are untouched.
    """
    if not 0 <= rho <= 1:
        raise ValueError(f"noise rate must lie in [0, 1], got {rho}")
    rng = derive_rng(seed, "noise")
    noisy_tasks = []
    for task in tasks:
        classes = task.classes
        if rho > 0 and len(classes) < 2:
            raise InsufficientDataError(f"Task {task.task_id} has a single class; cannot inject noise")
        n = len(task.samples)
        flips = rng.random(n) < rho
        picks = rng.integers(0, max(len(classes) - 1, 1), size=n)
        samples = []
        for sample, flip, pick in zip(task.samples, flips, picks):
            if not flip:
                samples.append(sample.model_copy(update={"y": sample.y_true, "is_noisy": False}))
                continue
            others = [c for c in classes if c != sample.y_true]
            samples.append(sample.model_copy(update={"y": others[int(pick)], "is_noisy": True}))
        noisy_tasks.append(task.model_copy(update={"samples": samples}))
        logger.debug(f"Task {task.task_id}: {int(flips.sum())}/{n} labels flipped")
    return noisy_tasks


@dataclass
class StreamBundle:
    """Everything the runner needs from one seeded stream build"""
    tasks: List[TaskSpec]
    test_sets: Dict[int, List[Sample]]
    label_names: List[str]

    @property
    def num_classes(self) -> int:
        return len(self.label_names)


def build_stream(corpus: LabeledCorpus, cfg: StreamConfig) -> StreamBundle:
    """partition -> test split -> blur -> noise, all seeded from cfg.seed"""
    tasks = partition_tasks(corpus, cfg)
    tasks, test_sets = split_test(tasks, cfg.test_fraction, cfg.seed)
    tasks = apply_blur(tasks, cfg.blur_rate, cfg.seed)
    tasks = inject_noise(tasks, cfg.noise_rate, cfg.seed)
    total = sum(len(t.samples) for t in tasks)
    noisy = sum(s.is_noisy for t in tasks for s in t.samples)
    logger.info(
        f"Built stream: {len(tasks)} tasks, {total} training samples, "
        f"{noisy} noisy ({noisy / max(total, 1):.1%})"
    )
    return StreamBundle(tasks=tasks, test_sets=test_sets, label_names=corpus.label_names())


# =====================================================
# DELAY-BUFFER DELIVERY
# =====================================================

class DelayStream:
    """Stream state: an ordered sample list consumed M samples at a time"""

    def __init__(self, samples: Sequence[Sample], buffer_size: int, encoder: TextEncoder):
        if buffer_size < 1:
            raise ValueError(f"delay buffer size must be >= 1, got {buffer_size}")
        self.samples = list(samples)
        self.buffer_size = buffer_size
        self.encoder = encoder
        self.position = 0

    @property
    def exhausted(self) -> bool:
        return self.position >= len(self.samples)

    @property
    def remaining(self) -> int:
        return len(self.samples) - self.position

    def num_buffers(self) -> int:
        return -(-len(self.samples) // self.buffer_size)


def next_delay_buffer(stream: DelayStream, model: ModelParams) -> List[Sample]:
    """
    Pull the next delay buffer and stamp each sample with the model's label.

    Args:
        stream: Stream state (advanced in place)
        model: Current primary model; y_model is its argmax at arrival

    Returns:
        Up to M samples in stream order
    """
    if stream.exhausted:
        raise EmptyInputError("Stream is exhausted")
    chunk = stream.samples[stream.position:stream.position + stream.buffer_size]
    stream.position += len(chunk)
    predictions = predict(model, stream.encoder.matrix([s.tokens for s in chunk]))
    return [s.model_copy(update={"y_model": int(p)}) for s, p in zip(chunk, predictions)]


def dump_stream(
    tasks: Sequence[TaskSpec],
    path: Union[str, Path],
    task_order: Optional[Sequence[int]] = None
) -> Path:
    """Write every streamed Sample as JSONL, in stream order"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    by_id = {task.task_id: task for task in tasks}
    order = list(task_order) if task_order is not None else [task.task_id for task in tasks]
    with path.open("w", encoding="utf-8") as fh:
        for task_id in order:
            for sample in by_id[task_id].samples:
                fh.write(sample.model_dump_json() + "\n")
    return path
