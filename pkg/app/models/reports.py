"""
Report models: routing records, cycle reports and run summaries
"""
from datetime import datetime
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field


# =====================================================
# PURIFIER RECORDS
# =====================================================

class RouteDecision(str, Enum):
    """Arrival routes (CLEAN/NOISY) and recheck outcomes (PROMOTE_*/DISCARD)"""
    CLEAN = "clean"
    NOISY = "noisy"
    PROMOTE_CLEAN = "promote_clean"
    PROMOTE_NOISY = "promote_noisy"
    DISCARD = "discard"


class ConfidenceRecord(BaseModel):
    """Confidence margins of one sample at arrival and at recheck"""
    sample_id: int
    conf_at_arrival: float
    conf_at_recheck: Optional[float] = None


class PromotionReport(BaseModel):
    """Outcome of one recheck cycle"""
    promoted_clean: int = 0
    promoted_noisy: int = 0
    discarded: int = 0

    # Oracle audit against Sample.is_noisy
    noisy_rechecked: int = 0
    noisy_promoted_correct: int = 0

    @property
    def total(self) -> int:
        return self.promoted_clean + self.promoted_noisy + self.discarded

    def record(self, decision: RouteDecision, is_noisy: bool) -> None:
        """Count one recheck outcome"""
        if decision == RouteDecision.PROMOTE_CLEAN:
            self.promoted_clean += 1
        elif decision == RouteDecision.PROMOTE_NOISY:
            self.promoted_noisy += 1
            self.noisy_promoted_correct += int(is_noisy)
        elif decision == RouteDecision.DISCARD:
            self.discarded += 1
        else:
            raise ValueError(f"{decision.value} is an arrival route, not a recheck outcome")
        self.noisy_rechecked += int(is_noisy)

    def precision(self) -> Optional[float]:
        if self.promoted_noisy == 0:
            return None
        return self.noisy_promoted_correct / self.promoted_noisy

    def recall(self) -> Optional[float]:
        if self.noisy_rechecked == 0:
            return None
        return self.noisy_promoted_correct / self.noisy_rechecked


# =====================================================
# CYCLE AND RUN REPORTS
# =====================================================

class PhaseLosses(BaseModel):
    """Mean loss per epoch of each phase that ran this cycle"""
    purifier: List[float] = Field(default_factory=list)
    ncl: List[float] = Field(default_factory=list)
    sft: List[float] = Field(default_factory=list)
    ipo: List[float] = Field(default_factory=list)


class CycleReport(BaseModel):
    """One delay-buffer cycle; written as a JSONL line"""
    cycle: int
    task_id: int
    task_position: int
    arrivals: int
    routed_clean: int
    routed_noisy: int
    feedback_agreement: float  # fraction with y == y_model
    promotion: Optional[PromotionReport] = None
    noisy_precision: Optional[float] = None
    noisy_recall: Optional[float] = None
    cumulative_precision: Optional[float] = None
    cumulative_recall: Optional[float] = None
    losses: PhaseLosses = Field(default_factory=PhaseLosses)
    buffer_sizes: Dict[str, int] = Field(default_factory=dict)


class SeedResult(BaseModel):
    """Outcome of one seed"""
    seed: int
    ap: float
    af: Optional[float]
    final_row: List[float]
    diagonal: List[float]
    cycles: int
    pending_unpromoted: int = 0
    output_dir: str


class RunSummary(BaseModel):
    """Aggregate over seeds"""
    status: str  # success, failed
    method: str
    ablation: Dict[str, bool]
    task_order: List[int]
    noise_rate: float
    seeds: List[int]
    ap_mean: float
    ap_std: float
    af_mean: Optional[float]
    af_std: Optional[float]
    per_seed: List[SeedResult]

    # Timing
    started_at: datetime
    completed_at: datetime
    duration_seconds: float

    output_dir: str
    summary: str


class AblationRow(BaseModel):
    """One row of the component ablation table"""
    tcp: bool
    ncl: bool
    ipo: bool
    replay: bool = True
    ap_mean: float
    ap_std: float
    af_mean: Optional[float]
    af_std: Optional[float]


class SweepRow(BaseModel):
    """One setting of a noise-rate or task-order sweep"""
    axis: str  # noise_rate, task_order
    value: str
    ap_mean: float
    ap_std: float
    af_mean: Optional[float]
    af_std: Optional[float]
