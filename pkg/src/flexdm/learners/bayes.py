"""Naive Bayes with Laplace-smoothed nominal and Gaussian numeric conditionals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from ..arff import class_counts
from ..models import Dataset
from .base import feature_indices, known_class_rows, numeric_means, numeric_value
from .registry import LearnerOption

VARIANCE_FLOOR = 1e-9
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class NominalConditional:
    attribute: int
    # log P(value | class), shape (classes, labels + 1); the last column is
    # the missing category.
    log_probs: np.ndarray

    def log_likelihood(self, value: Any) -> np.ndarray:
        column = self.log_probs.shape[1] - 1 if value is None else int(value)
        return self.log_probs[:, column]


@dataclass(frozen=True)
class GaussianConditional:
    attribute: int
    means: np.ndarray
    variances: np.ndarray
    impute: float

    def log_likelihood(self, value: Any) -> np.ndarray:
        x = numeric_value(value, self.impute)
        return -0.5 * (_LOG_2PI + np.log(self.variances)) - (x - self.means) ** 2 / (
            2.0 * self.variances
        )


@dataclass(frozen=True)
class NaiveBayesModel:
    log_priors: np.ndarray
    conditionals: tuple[NominalConditional | GaussianConditional, ...]

    def classify(self, ds: Dataset, row: int) -> int:
        scores = self.log_priors.copy()
        values = ds.rows[row]
        for conditional in self.conditionals:
            scores = scores + conditional.log_likelihood(values[conditional.attribute])
        # Classes absent from training stay at -inf; argmax keeps the first maximum.
        return int(np.argmax(scores))


def _nominal_conditional(
    ds: Dataset, attribute: int, rows: Sequence[int], class_totals: np.ndarray
) -> NominalConditional:
    width = len(ds.attributes[attribute].labels or ())
    counts = np.zeros((len(ds.class_labels), width + 1), dtype=float)
    for row in rows:
        value = ds.rows[row][attribute]
        column = width if value is None else int(value)
        counts[ds.class_of(row), column] += 1.0

    denominators = (class_totals + width + 1.0)[:, np.newaxis]
    return NominalConditional(attribute=attribute, log_probs=np.log((counts + 1.0) / denominators))


def _gaussian_conditional(
    ds: Dataset, attribute: int, rows: Sequence[int], impute: float
) -> GaussianConditional:
    labels = np.array([ds.class_of(row) for row in rows])
    values = np.array([numeric_value(ds.rows[row][attribute], impute) for row in rows])
    means = np.zeros(len(ds.class_labels))
    variances = np.ones(len(ds.class_labels))
    for label in range(len(ds.class_labels)):
        selected = values[labels == label]
        if selected.size:
            means[label] = selected.mean()
            variances[label] = selected.var()
    return GaussianConditional(
        attribute=attribute,
        means=means,
        variances=np.maximum(variances, VARIANCE_FLOOR),
        impute=impute,
    )


def build_naive_bayes(
    ds: Dataset, train_rows: Sequence[int], options: Mapping[str, Any]
) -> NaiveBayesModel:
    rows = known_class_rows(ds, train_rows)
    totals = np.array(class_counts(ds, rows), dtype=float)
    with np.errstate(divide="ignore"):
        log_priors = np.log(totals / totals.sum())

    means = numeric_means(ds, rows)
    conditionals: list[NominalConditional | GaussianConditional] = []
    for attribute in feature_indices(ds):
        if ds.attributes[attribute].is_nominal:
            conditionals.append(_nominal_conditional(ds, attribute, rows, totals))
        else:
            conditionals.append(_gaussian_conditional(ds, attribute, rows, means[attribute]))
    return NaiveBayesModel(log_priors=log_priors, conditionals=tuple(conditionals))


NAIVE_BAYES_OPTIONS: dict[str, LearnerOption] = {}
