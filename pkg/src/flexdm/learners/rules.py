"""ZeroR (majority class) and OneR (best single-attribute rule)."""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from ..models import Dataset
from .base import (
    feature_indices,
    known_class_rows,
    majority_index,
    majority_label,
    numeric_means,
    numeric_value,
)
from .registry import LearnerOption, parse_positive_int

DEFAULT_MIN_BUCKET = "6"


@dataclass(frozen=True)
class ZeroRModel:
    label: int

    def classify(self, ds: Dataset, row: int) -> int:
        return self.label


def build_zeror(ds: Dataset, train_rows: Sequence[int], options: Mapping[str, Any]) -> ZeroRModel:
    return ZeroRModel(label=majority_label(ds, known_class_rows(ds, train_rows)))


ZEROR_OPTIONS: dict[str, LearnerOption] = {}


# OneR


@dataclass(frozen=True)
class NominalRule:
    attribute: int
    # Keyed by label index, or None for the missing category.
    outcomes: Mapping[int | None, int]
    fallback: int

    def apply(self, ds: Dataset, row: int) -> int:
        return self.outcomes.get(ds.rows[row][self.attribute], self.fallback)


@dataclass(frozen=True)
class NumericRule:
    attribute: int
    breakpoints: tuple[float, ...]
    # One more outcome than breakpoints.
    outcomes: tuple[int, ...]
    mean: float

    def apply(self, ds: Dataset, row: int) -> int:
        value = numeric_value(ds.rows[row][self.attribute], self.mean)
        return self.outcomes[bisect.bisect_right(self.breakpoints, value)]


@dataclass(frozen=True)
class OneRModel:
    rule: NominalRule | NumericRule | None
    fallback: int

    def classify(self, ds: Dataset, row: int) -> int:
        if self.rule is None:
            return self.fallback
        return self.rule.apply(ds, row)


def _nominal_rule(
    ds: Dataset, attribute: int, rows: Sequence[int], fallback: int
) -> tuple[NominalRule, int]:
    width = len(ds.class_labels)
    groups: dict[int | None, list[int]] = {}
    for row in rows:
        value = ds.rows[row][attribute]
        key = None if value is None else int(value)
        counts = groups.setdefault(key, [0] * width)
        counts[ds.class_of(row)] += 1

    outcomes: dict[int | None, int] = {}
    errors = 0
    for key, counts in groups.items():
        label = majority_index(counts)
        outcomes[key] = label
        errors += sum(counts) - counts[label]
    return NominalRule(attribute=attribute, outcomes=outcomes, fallback=fallback), errors


def _numeric_buckets(
    pairs: list[tuple[float, int]], width: int, min_bucket: int
) -> list[tuple[float, float, list[int]]]:
    """Sorted (value, label) pairs cut into (low, high, class counts) buckets.

    A bucket closes once its majority class reaches `min_bucket` rows, the
    next value differs from the last one, and the next row's class is not
    the bucket majority.
    """
    buckets: list[tuple[float, float, list[int]]] = []
    counts = [0] * width
    low = pairs[0][0]
    for position, (value, label) in enumerate(pairs):
        counts[label] += 1
        following = pairs[position + 1] if position + 1 < len(pairs) else None
        if following is None:
            break
        majority = majority_index(counts)
        if (
            counts[majority] >= min_bucket
            and following[0] != value
            and following[1] != majority
        ):
            buckets.append((low, value, counts))
            counts = [0] * width
            low = following[0]
    buckets.append((low, pairs[-1][0], counts))
    return buckets


def _numeric_rule(
    ds: Dataset, attribute: int, rows: Sequence[int], min_bucket: int, mean: float
) -> tuple[NumericRule, int]:
    pairs = sorted(
        (numeric_value(ds.rows[row][attribute], mean), ds.class_of(row)) for row in rows
    )
    buckets = _numeric_buckets(pairs, len(ds.class_labels), min_bucket)

    # Adjacent buckets predicting the same class collapse into one interval.
    merged: list[tuple[float, float, int, int]] = []
    for low, high, counts in buckets:
        label = majority_index(counts)
        errors = sum(counts) - counts[label]
        if merged and merged[-1][2] == label:
            previous_low, _, _, previous_errors = merged[-1]
            merged[-1] = (previous_low, high, label, previous_errors + errors)
        else:
            merged.append((low, high, label, errors))

    breakpoints = tuple(
        (left[1] + right[0]) / 2.0 for left, right in zip(merged, merged[1:])
    )
    rule = NumericRule(
        attribute=attribute,
        breakpoints=breakpoints,
        outcomes=tuple(item[2] for item in merged),
        mean=mean,
    )
    return rule, sum(item[3] for item in merged)


def build_oner(ds: Dataset, train_rows: Sequence[int], options: Mapping[str, Any]) -> OneRModel:
    rows = known_class_rows(ds, train_rows)
    fallback = majority_label(ds, rows)
    means = numeric_means(ds, rows)
    min_bucket = options["-B"]

    best: NominalRule | NumericRule | None = None
    best_errors = len(rows) + 1
    for attribute in feature_indices(ds):
        if ds.attributes[attribute].is_nominal:
            rule, errors = _nominal_rule(ds, attribute, rows, fallback)
        else:
            rule, errors = _numeric_rule(ds, attribute, rows, min_bucket, means[attribute])
        if errors < best_errors:
            best, best_errors = rule, errors
    return OneRModel(rule=best, fallback=fallback)


ONER_OPTIONS = {
    "-B": LearnerOption(
        flag="-B",
        default=DEFAULT_MIN_BUCKET,
        parse=parse_positive_int,
        description="minimum bucket size for numeric discretisation",
    ),
}
