"""k-nearest-neighbours over min-max normalised numerics and nominal overlap."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from ..models import Dataset
from .base import feature_indices, known_class_rows, numeric_means, numeric_value
from .registry import LearnerOption, parse_positive_int

MISSING_CODE = -1


@dataclass(frozen=True)
class KnnModel:
    k: int
    numeric_attributes: tuple[int, ...]
    nominal_attributes: tuple[int, ...]
    impute: np.ndarray
    minimums: np.ndarray
    spans: np.ndarray
    # Training rows in the order they were given; ties favour lower positions.
    numeric_train: np.ndarray
    nominal_train: np.ndarray
    labels: np.ndarray
    label_count: int

    def _normalise(self, values: np.ndarray) -> np.ndarray:
        scaled = np.zeros_like(values)
        np.divide(values - self.minimums, self.spans, out=scaled, where=self.spans > 0)
        return scaled

    def classify(self, ds: Dataset, row: int) -> int:
        values = ds.rows[row]
        numeric = np.array(
            [
                numeric_value(values[attribute], float(mean))
                for attribute, mean in zip(self.numeric_attributes, self.impute)
            ],
            dtype=float,
        )
        nominal = np.array(
            [
                MISSING_CODE if values[attribute] is None else int(values[attribute])
                for attribute in self.nominal_attributes
            ],
            dtype=int,
        )

        squared = np.sum((self.numeric_train - self._normalise(numeric)) ** 2, axis=1)
        squared = squared + np.sum(self.nominal_train != nominal, axis=1)
        nearest = np.argsort(squared, kind="stable")[: self.k]
        votes = np.bincount(self.labels[nearest], minlength=self.label_count)
        return int(np.argmax(votes))


def build_knn(ds: Dataset, train_rows: Sequence[int], options: Mapping[str, Any]) -> KnnModel:
    rows = known_class_rows(ds, train_rows)
    means = numeric_means(ds, rows)
    features = feature_indices(ds)
    numeric_attributes = tuple(index for index in features if not ds.attributes[index].is_nominal)
    nominal_attributes = tuple(index for index in features if ds.attributes[index].is_nominal)

    impute = np.array([means[index] for index in numeric_attributes], dtype=float)
    raw = np.array(
        [
            [numeric_value(ds.rows[row][index], means[index]) for index in numeric_attributes]
            for row in rows
        ],
        dtype=float,
    ).reshape(len(rows), len(numeric_attributes))
    minimums = raw.min(axis=0) if raw.size else np.zeros(0)
    spans = (raw.max(axis=0) - minimums) if raw.size else np.zeros(0)
    scaled = np.zeros_like(raw)
    np.divide(raw - minimums, spans, out=scaled, where=spans > 0)

    nominal = np.array(
        [
            [
                MISSING_CODE if ds.rows[row][index] is None else int(ds.rows[row][index])
                for index in nominal_attributes
            ]
            for row in rows
        ],
        dtype=int,
    ).reshape(len(rows), len(nominal_attributes))

    return KnnModel(
        k=min(options["-K"], len(rows)),
        numeric_attributes=numeric_attributes,
        nominal_attributes=nominal_attributes,
        impute=impute,
        minimums=minimums,
        spans=spans,
        numeric_train=scaled,
        nominal_train=nominal,
        labels=np.array([ds.class_of(row) for row in rows], dtype=int),
        label_count=len(ds.class_labels),
    )


KNN_OPTIONS = {
    "-K": LearnerOption(
        flag="-K",
        default="1",
        parse=parse_positive_int,
        description="number of neighbours",
    ),
}
