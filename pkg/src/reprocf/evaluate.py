"""Confusion counts, accuracy/sensitivity/specificity and the majority-class baseline.

The positive class is 1 (a reproducibility error) unless ``positive=0`` is
passed, which swaps the reading.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .matrix import CellMask, UtilityMatrix, _check_dims


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsRecord:
    accuracy: float
    # None when the test set holds no positive (resp. negative) cell
    sensitivity: Optional[float]
    specificity: Optional[float]


def confusion(
    truth: UtilityMatrix,
    predictions: np.ndarray,
    test: CellMask,
    positive: int = 1,
) -> ConfusionCounts:
    """Count outcomes over the cells of ``test`` only."""
    predictions = np.asarray(predictions)
    _check_dims(truth.shape, predictions.shape)
    _check_dims(truth.shape, test.dims)
    t = truth.cells[test.bits] == positive
    p = predictions[test.bits] == positive
    return ConfusionCounts(
        tp=int(np.sum(t & p)),
        fp=int(np.sum(~t & p)),
        tn=int(np.sum(~t & ~p)),
        fn=int(np.sum(t & ~p)),
    )


def metrics(counts: ConfusionCounts) -> MetricsRecord:
    if counts.total == 0:
        raise ValueError("cannot compute metrics on an empty test set")
    pos = counts.tp + counts.fn
    neg = counts.tn + counts.fp
    return MetricsRecord(
        accuracy=(counts.tp + counts.tn) / counts.total,
        sensitivity=counts.tp / pos if pos else None,
        specificity=counts.tn / neg if neg else None,
    )


def dummy_predict(matrix: UtilityMatrix, train: CellMask) -> np.ndarray:
    """Predict the majority training value everywhere; ties go to 0."""
    _check_dims(matrix.shape, train.dims)
    n_train = len(train)
    if n_train == 0:
        raise ValueError("dummy classifier needs a non-empty training set")
    ones = int(matrix.cells[train.bits].sum())
    majority = 1 if 2 * ones > n_train else 0
    return np.full(matrix.shape, majority, dtype=np.uint8)


def accuracy(truth: UtilityMatrix, predictions: np.ndarray, test: CellMask) -> float:
    return metrics(confusion(truth, predictions, test)).accuracy
