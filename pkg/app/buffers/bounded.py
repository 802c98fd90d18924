"""
Bounded Sample Buffers

One class backs every buffer role: the delay partitions C and N and the
replay buffers R_clean and R_noisy.
"""
import logging
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

from app.errors import DuplicateSampleError, EmptyInputError
from app.models.config import BufferConfig, EvictionPolicy
from app.models.sample import Sample

logger = logging.getLogger(__name__)


class PushOutcome(str, Enum):
    APPENDED = "appended"
    REPLACED = "replaced"  # evicted a resident
    DROPPED = "dropped"    # incoming sample not admitted


class PushResult(BaseModel):
    outcome: PushOutcome
    evicted_id: Optional[int] = None


class BufferRecord(BaseModel):
    """One line of the buffer audit dump"""
    cycle: int
    buffer: str
    sample: Sample


class BoundedBuffer:
    """
    Capacity-bounded sample store with reservoir or admission-stop eviction.

    Reservoir keeps every sample seen so far with equal probability
    capacity / seen_count.
    """

    def __init__(
        self,
        capacity: int,
        policy: EvictionPolicy = EvictionPolicy.RESERVOIR,
        name: str = "buffer"
    ):
        if capacity < 0:
            raise ValueError(f"capacity must be >= 0, got {capacity}")
        self.capacity = capacity
        self.policy = policy
        self.name = name
        self.items: List[Sample] = []
        self.seen_count = 0
        self._ids: Dict[int, int] = {}  # sample id -> slot

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[Sample]:
        return iter(list(self.items))

    def __contains__(self, sample_id: int) -> bool:
        return sample_id in self._ids

    @property
    def ids(self) -> List[int]:
        return [s.id for s in self.items]

    def is_empty(self) -> bool:
        return not self.items

    def clear(self) -> None:
        """Drop every resident; seen_count is kept"""
        self.items = []
        self._ids = {}

    def snapshot(self) -> List[Sample]:
        return list(self.items)


def push(buffer: BoundedBuffer, sample: Sample, rng: np.random.Generator) -> PushResult:
    """
    Offer a sample to a buffer.

    Args:
        buffer: Target buffer (mutated)
        sample: Incoming sample; its id must not already be resident
        rng: Generator for the reservoir draw

    Returns:
        PushResult describing what happened
    """
    if sample.id in buffer:
        raise DuplicateSampleError(f"Sample {sample.id} already in {buffer.name}")
    buffer.seen_count += 1

    if len(buffer.items) < buffer.capacity:
        buffer._ids[sample.id] = len(buffer.items)
        buffer.items.append(sample)
        return PushResult(outcome=PushOutcome.APPENDED)

    if buffer.capacity == 0 or buffer.policy == EvictionPolicy.ADMISSION_STOP:
        return PushResult(outcome=PushOutcome.DROPPED)

    j = int(rng.integers(0, buffer.seen_count))
    if j >= buffer.capacity:
        return PushResult(outcome=PushOutcome.DROPPED)

    evicted = buffer.items[j]
    del buffer._ids[evicted.id]
    buffer.items[j] = sample
    buffer._ids[sample.id] = j
    return PushResult(outcome=PushOutcome.REPLACED, evicted_id=evicted.id)


def sample_batch(pool: Union[BoundedBuffer, Sequence], n: int, rng: np.random.Generator) -> List:
    """n uniform draws without replacement; the whole pool when n >= size"""
    items = pool.items if isinstance(pool, BoundedBuffer) else pool
    if len(items) == 0:
        raise EmptyInputError(f"Cannot sample from empty {getattr(pool, 'name', 'pool')}")
    if n >= len(items):
        return [items[i] for i in rng.permutation(len(items))]
    picks = rng.choice(len(items), size=n, replace=False)
    return [items[i] for i in picks]


# =====================================================
# BUFFER SET
# =====================================================

class BufferSet:
    """Delay partitions and replay buffers of one run"""

    def __init__(self, cfg: BufferConfig):
        self.clean = BoundedBuffer(cfg.clean_capacity, cfg.eviction, name="clean")
        self.noisy = BoundedBuffer(cfg.noisy_capacity, cfg.eviction, name="noisy")
        self.replay_clean = BoundedBuffer(cfg.replay_clean_capacity, cfg.eviction, name="replay_clean")
        self.replay_noisy = BoundedBuffer(cfg.replay_noisy_capacity, cfg.eviction, name="replay_noisy")

    def sizes(self) -> Dict[str, int]:
        return {
            "clean": len(self.clean),
            "noisy": len(self.noisy),
            "replay_clean": len(self.replay_clean),
            "replay_noisy": len(self.replay_noisy)
        }

    def dump(self, path: Union[str, Path], cycle: int) -> None:
        """Append the current buffer contents to a JSONL audit file"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            for name, buffer in (
                ("clean", self.clean),
                ("noisy", self.noisy),
                ("replay_clean", self.replay_clean),
                ("replay_noisy", self.replay_noisy)
            ):
                for sample in buffer.items:
                    record = BufferRecord(cycle=cycle, buffer=name, sample=sample)
                    fh.write(record.model_dump_json() + "\n")
