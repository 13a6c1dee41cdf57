"""Preprocessing shared by every learner.

Training rows whose class is missing are dropped. Numeric missing values are
replaced by the mean of the training rows; nominal missing values stay None
and act as one more category.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from ..arff import class_counts
from ..models import Dataset, Value
from .registry import LearnerError


def known_class_rows(ds: Dataset, rows: Iterable[int]) -> list[int]:
    known = [row for row in rows if ds.class_of(row) is not None]
    if not known:
        raise LearnerError("no training rows with a known class")
    return known


def feature_indices(ds: Dataset) -> list[int]:
    return [index for index in range(len(ds.attributes)) if index != ds.class_index]


def majority_index(counts: Sequence[int]) -> int:
    """First index holding the largest count (declaration-order tie-break)."""
    best = 0
    for index, count in enumerate(counts):
        if count > counts[best]:
            best = index
    return best


def majority_label(ds: Dataset, rows: Iterable[int]) -> int:
    return majority_index(class_counts(ds, rows))


def numeric_means(ds: Dataset, rows: Sequence[int]) -> dict[int, float]:
    means: dict[int, float] = {}
    for index in feature_indices(ds):
        if ds.attributes[index].is_nominal:
            continue
        present = [ds.rows[row][index] for row in rows if ds.rows[row][index] is not None]
        means[index] = sum(present) / len(present) if present else 0.0
    return means


def numeric_value(value: Value, mean: float) -> float:
    return mean if value is None else float(value)
