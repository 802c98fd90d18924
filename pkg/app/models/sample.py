"""
Stream records: documents, samples and tasks
"""
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class LabeledDocument(BaseModel):
    """One corpus line: {"text": ..., "label": ...}"""
    text: str
    label: str


class LabeledCorpus(BaseModel):
    """A labeled corpus plus an optional synonym table for augmentation"""
    documents: List[LabeledDocument]
    synonyms: Dict[str, List[str]] = Field(default_factory=dict)

    def label_names(self) -> List[str]:
        """Distinct labels in first-seen order; position is the class index"""
        seen: Dict[str, None] = {}
        for doc in self.documents:
            seen.setdefault(doc.label, None)
        return list(seen)

    def label_indices(self) -> List[int]:
        index = {name: i for i, name in enumerate(self.label_names())}
        return [index[doc.label] for doc in self.documents]


class UnlabeledSample(BaseModel):
    """A sample with every label removed"""
    model_config = ConfigDict(frozen=True)

    id: int
    tokens: Tuple[str, ...]


class Sample(BaseModel):
    """One streamed instance"""
    model_config = ConfigDict(frozen=True)

    id: int = Field(ge=0)
    tokens: Tuple[str, ...]
    y_true: int = Field(ge=0)  # hidden from learners; evaluation and oracles only
    y: int = Field(ge=0)  # human feedback, possibly noisy
    y_model: Optional[int] = None  # model-generated label, set on arrival
    task_id: int = Field(ge=0)
    is_noisy: bool = False

    @model_validator(mode="after")
    def _noise_flag_matches_labels(self) -> "Sample":
        if self.is_noisy != (self.y != self.y_true):
            raise ValueError("is_noisy must equal (y != y_true)")
        return self

    def strip_labels(self) -> UnlabeledSample:
        return UnlabeledSample(id=self.id, tokens=self.tokens)


class TaskSpec(BaseModel):
    """One task of the sequence"""
    task_id: int = Field(ge=0)
    primary_classes: List[int]
    secondary_classes: List[int] = Field(default_factory=list)
    samples: List[Sample] = Field(default_factory=list)
    achieved_blur: float = 0.0

    @model_validator(mode="after")
    def _disjoint_classes(self) -> "TaskSpec":
        if set(self.primary_classes) & set(self.secondary_classes):
            raise ValueError("primary and secondary classes must be disjoint")
        return self

    @property
    def classes(self) -> List[int]:
        return sorted(set(self.primary_classes) | set(self.secondary_classes))

    def secondary_fraction(self) -> float:
        if not self.samples:
            return 0.0
        primary = set(self.primary_classes)
        secondary = sum(1 for s in self.samples if s.y_true not in primary)
        return secondary / len(self.samples)
