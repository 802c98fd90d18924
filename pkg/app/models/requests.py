"""
Request and Response Models for the RiCL Simulator Service
"""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


# =====================================================
# EXPERIMENT REQUEST MODELS
# =====================================================

class ExperimentRequest(BaseModel):
    """Request to run an experiment"""
    config_path: Optional[str] = None  # INI file; defaults apply when absent
    overrides: Dict[str, Any] = Field(default_factory=dict)  # "section.key" -> value


class SweepRequest(BaseModel):
    """Request to sweep noise rates or task orders"""
    config_path: Optional[str] = None
    overrides: Dict[str, Any] = Field(default_factory=dict)
    noise_rates: Optional[List[float]] = None
    task_orders: Optional[List[str]] = None  # "original", "reverse" or "2,0,1,..."


class CorpusRequest(BaseModel):
    """Request to write a synthetic corpus"""
    output_path: str
    num_classes: int = Field(20, ge=1)
    docs_per_class: int = Field(300, ge=1)
    vocab_size: int = Field(1000, ge=1)
    doc_length: int = Field(20, ge=1)
    keyword_rate: float = Field(0.3, gt=0.0, le=1.0)
    seed: int = Field(0, ge=0)


class CorpusResponse(BaseModel):
    """Response from corpus generation"""
    success: bool
    output_path: str
    synonyms_path: str
    documents: int
    classes: int
    message: str


class ReportResponse(BaseModel):
    """Markdown report over a run directory"""
    run_dir: str
    markdown: str
