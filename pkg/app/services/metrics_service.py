"""
Metrics Service

Accuracy-matrix bookkeeping plus average final accuracy (AP) and average
forgetting (AF).
"""
import logging
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import pandas as pd

from app.errors import EmptyInputError, InsufficientDataError
from app.models.sample import Sample
from app.nn.core import ModelParams, TextEncoder, predict

logger = logging.getLogger(__name__)


class AccuracyMatrix:
    """
    m[i][j]: accuracy (percent) on task j's test split after training
    through task i. Indices are positions in the run's task order; the
    upper triangle stays NaN.
    """

    def __init__(self, num_tasks: int):
        if num_tasks < 1:
            raise ValueError(f"num_tasks must be >= 1, got {num_tasks}")
        self.num_tasks = num_tasks
        self.m = np.full((num_tasks, num_tasks), np.nan)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "AccuracyMatrix":
        """Build from a square (NaN-padded) or lower-triangular list of rows"""
        matrix = cls(len(rows))
        for i, row in enumerate(rows):
            for j, value in enumerate(row[:i + 1]):
                if value is not None and not np.isnan(value):
                    matrix.record(i, j, value)
        return matrix

    def record(self, after_task: int, task: int, accuracy: float) -> None:
        if not 0 <= task <= after_task < self.num_tasks:
            raise IndexError(f"Entry ({after_task}, {task}) outside the lower triangle")
        if not 0 <= accuracy <= 100:
            raise ValueError(f"Accuracy must lie in [0, 100], got {accuracy}")
        self.m[after_task, task] = accuracy

    def final_row(self) -> np.ndarray:
        row = self.m[-1]
        if np.isnan(row).any():
            raise InsufficientDataError("Final row of the accuracy matrix is incomplete")
        return row.copy()

    def diagonal(self) -> np.ndarray:
        diag = np.diag(self.m)
        if np.isnan(diag).any():
            raise InsufficientDataError("Diagonal of the accuracy matrix is incomplete")
        return diag.copy()

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            self.m,
            index=pd.Index(range(self.num_tasks), name="after_task"),
            columns=[f"task_{j}" for j in range(self.num_tasks)]
        )
        return frame

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, float_format="%.4f", na_rep="")
        return path


def evaluate(params: ModelParams, test_split: Sequence[Sample], encoder: TextEncoder) -> float:
    """
    Accuracy (percent) against y_true; ties go to the lowest class index.

    Args:
        params: Model to evaluate
        test_split: Held-out samples of one task
        encoder: Feature encoder
    """
    if len(test_split) == 0:
        raise EmptyInputError("Cannot evaluate on an empty split")
    predictions = predict(params, encoder.matrix([s.tokens for s in test_split]))
    truth = np.array([s.y_true for s in test_split])
    return float(100.0 * np.mean(predictions == truth))


def ap(matrix: AccuracyMatrix) -> float:
    """Mean of the final row"""
    return float(np.mean(matrix.final_row()))


def af(matrix: AccuracyMatrix) -> float:
    """Mean drop from each earlier task's just-trained accuracy to its final accuracy; may be negative"""
    if matrix.num_tasks < 2:
        raise InsufficientDataError("Forgetting needs at least two tasks")
    drops = matrix.diagonal()[:-1] - matrix.final_row()[:-1]
    return float(np.mean(drops))


def write_summary_csv(matrix: AccuracyMatrix, path: Union[str, Path]) -> Path:
    """`AP,AF` header plus one value row; AF is blank for single-task runs"""
    path = Path(path)
    forgetting = af(matrix) if matrix.num_tasks >= 2 else None
    frame = pd.DataFrame([{"AP": ap(matrix), "AF": forgetting}])
    frame.to_csv(path, index=False, float_format="%.4f", na_rep="")
    return path


def mean_std(values: List[float]) -> tuple:
    """Mean and population std; (None, None) for an empty list"""
    if not values:
        return None, None
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())
