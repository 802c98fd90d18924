"""
Experiment Configuration Models

One pydantic model per INI section. Unknown keys are rejected everywhere.
"""
from enum import Enum
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Method(str, Enum):
    RICL = "ricl"
    SEQFT = "seqft"
    ER = "er"


class PurifierLoss(str, Enum):
    GCE = "gce"
    LOGISTIC_MARGIN = "logistic_margin"


class EvictionPolicy(str, Enum):
    RESERVOIR = "reservoir"
    ADMISSION_STOP = "admission_stop"


class AlternativesSource(str, Enum):
    PURIFIER = "purifier"
    PRIMARY = "primary"


def _split_csv(value):
    """Accept "1,2,3" as well as a list"""
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


class ConsistencyError(ValueError):
    """A cross-field check failed; key names the offending INI key"""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(message)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# =====================================================
# SECTIONS
# =====================================================

class StreamConfig(_Section):
    """Task sequence, blur, noise and delay-buffer settings"""
    num_tasks: int = Field(5, ge=1)
    classes_per_task: int = Field(4, ge=1)
    blur_rate: float = Field(0.1, ge=0.0, lt=1.0)
    noise_rate: float = Field(0.2, ge=0.0, le=1.0)
    delay_buffer_size: int = Field(200, ge=1)
    test_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    seed: int = Field(0, ge=0)


class CorpusConfig(_Section):
    """Where samples come from: "synthetic" or a JSONL path"""
    source: str = "synthetic"
    docs_per_class: int = Field(300, ge=1)
    vocab_size: int = Field(1000, ge=1)
    doc_length: int = Field(20, ge=1)
    keyword_rate: float = Field(0.3, gt=0.0, le=1.0)


class ModelConfig(_Section):
    hash_dim: int = Field(2 ** 14, ge=1)
    embed_dim: int = Field(64, ge=1)
    hidden_dim: int = Field(128, ge=1)
    init_scale: float = Field(0.2, ge=0.0)
    hash_seed: int = Field(0, ge=0)


class PurifierConfig(_Section):
    """Temporal consistency-aware purifier training"""
    epochs: int = Field(5, ge=0)
    lr: float = Field(0.2, gt=0.0)
    q: float = Field(0.7, gt=0.0, le=1.0)
    batch_size: int = Field(32, ge=1)
    loss: PurifierLoss = PurifierLoss.GCE


class TrainPhaseConfig(_Section):
    """Primary-model phases: contrastive, supervised warmup, preference"""
    lr_ncl: float = Field(0.02, gt=0.0)
    lr_sft: float = Field(0.1, gt=0.0)
    lr_ipo: float = Field(0.1, gt=0.0)
    num_alternatives: int = Field(5, ge=1)
    batch_size: int = Field(32, ge=1)
    epochs: int = Field(3, ge=1)
    replay_mix: float = Field(0.5, ge=0.0, le=1.0)
    tau: float = Field(0.1, gt=0.0)
    alternatives_source: AlternativesSource = AlternativesSource.PRIMARY
    freeze_pairs: bool = False


BUFFER_PROFILES: Dict[str, Dict[str, int]] = {
    "tacred": {"clean_capacity": 200, "noisy_capacity": 400, "replay_clean_capacity": 800, "replay_noisy_capacity": 800},
    "fewrel": {"clean_capacity": 1000, "noisy_capacity": 2000, "replay_clean_capacity": 4000, "replay_noisy_capacity": 4000},
}


class BufferConfig(_Section):
    """Partition and replay capacities; unset capacities come from the profile"""
    profile: str = "tacred"
    clean_capacity: Optional[int] = Field(None, ge=0)
    noisy_capacity: Optional[int] = Field(None, ge=0)
    replay_clean_capacity: Optional[int] = Field(None, ge=0)
    replay_noisy_capacity: Optional[int] = Field(None, ge=0)
    eviction: EvictionPolicy = EvictionPolicy.RESERVOIR

    @model_validator(mode="after")
    def _fill_from_profile(self) -> "BufferConfig":
        if self.profile not in BUFFER_PROFILES:
            raise ValueError(f"unknown profile '{self.profile}' (expected one of {sorted(BUFFER_PROFILES)})")
        for key, value in BUFFER_PROFILES[self.profile].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        return self


class AugmentConfig(_Section):
    """Token-level augmentation rates"""
    alpha: float = Field(0.1, ge=0.0, le=1.0)
    swap_rate: float = Field(0.1, ge=0.0, le=1.0)
    delete_prob: float = Field(0.1, ge=0.0, le=1.0)
    k: int = Field(4, ge=1, le=4)
    seed: int = Field(0, ge=0)
    synonym_path: Optional[str] = None
    synonym_table: Dict[str, List[str]] = Field(default_factory=dict, exclude=True)


class AblationFlags(_Section):
    """RiCL components; switching all of them off leaves sequential fine-tuning"""
    tcp: bool = True
    ncl: bool = True
    ipo: bool = True
    replay: bool = True


class PipelineFlags(BaseModel):
    """Which stages of a cycle run; derived from method and ablation flags"""
    purify: bool
    contrastive: bool
    preference: bool
    replay: bool


# =====================================================
# EXPERIMENT
# =====================================================

class ExperimentConfig(_Section):
    """A complete, validated experiment"""
    method: Method = Method.RICL
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    output_dir: str = "runs"
    task_order: Optional[List[int]] = None
    dump_stream: bool = False
    dump_buffers: bool = False

    ablation: AblationFlags = Field(default_factory=AblationFlags)
    stream: StreamConfig = Field(default_factory=StreamConfig)
    corpus: CorpusConfig = Field(default_factory=CorpusConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    purifier: PurifierConfig = Field(default_factory=PurifierConfig)
    train: TrainPhaseConfig = Field(default_factory=TrainPhaseConfig)
    buffers: BufferConfig = Field(default_factory=BufferConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)

    @field_validator("seeds", mode="before")
    @classmethod
    def _parse_seeds(cls, value):
        return _split_csv(value)

    @model_validator(mode="before")
    @classmethod
    def _resolve_task_order(cls, data):
        if not isinstance(data, dict):
            return data
        order: Union[str, List, None] = data.get("task_order")
        if isinstance(order, str):
            keyword = order.strip().lower()
            if keyword in ("", "original"):
                data = {**data, "task_order": None}
            elif keyword == "reverse":
                stream = data.get("stream") or {}
                if isinstance(stream, BaseModel):
                    stream = stream.model_dump()
                num_tasks = int(stream.get("num_tasks", StreamConfig().num_tasks))
                data = {**data, "task_order": list(reversed(range(num_tasks)))}
            else:
                data = {**data, "task_order": _split_csv(order)}
        return data

    @model_validator(mode="after")
    def _check_consistency(self) -> "ExperimentConfig":
        if self.task_order is not None and sorted(self.task_order) != list(range(self.stream.num_tasks)):
            raise ConsistencyError(
                "experiment.task_order",
                f"task_order must be a permutation of 0..{self.stream.num_tasks - 1}, got {self.task_order}"
            )
        if self.method != Method.RICL:
            disabled = [name for name, on in self.ablation.model_dump().items() if not on]
            if disabled:
                raise ConsistencyError(
                    f"ablation.{disabled[0]}", f"ablation flags are only valid with method=ricl, not {self.method.value}"
                )
        return self

    def resolved_task_order(self) -> List[int]:
        if self.task_order is None:
            return list(range(self.stream.num_tasks))
        return list(self.task_order)

    def pipeline_flags(self) -> PipelineFlags:
        if self.method == Method.SEQFT:
            return PipelineFlags(purify=False, contrastive=False, preference=False, replay=False)
        if self.method == Method.ER:
            return PipelineFlags(purify=False, contrastive=False, preference=False, replay=True)
        return PipelineFlags(
            purify=self.ablation.tcp,
            contrastive=self.ablation.ncl,
            preference=self.ablation.ipo,
            replay=self.ablation.replay
        )
