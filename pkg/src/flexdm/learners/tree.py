"""C4.5-style decision tree with confidence-factor subtree replacement.

Growth picks the split with the highest information gain ratio. Nominal
attributes split multiway on the values present at the node (missing values
get their own branch); numeric attributes split in two at the midpoint
between adjacent distinct values with the highest gain. A node becomes a
leaf when it is pure, holds fewer than 2*M rows, or no split gains
information.

Pruning walks the tree bottom-up and replaces a subtree by a leaf when the
summed pessimistic error estimate of its leaves exceeds the estimate for the
subtree root taken as a single leaf.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Iterator, Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from ..arff import class_counts
from ..models import Dataset, Value
from .base import feature_indices, known_class_rows, majority_index, numeric_means, numeric_value
from .registry import LearnerOption, parse_confidence_factor, parse_positive_int

LOGGER = logging.getLogger(__name__)

DEFAULT_CONFIDENCE = "0.25"
DEFAULT_MIN_LEAF = "2"
MIN_GAIN = 1e-10
PRUNE_TOLERANCE = 1e-9

BranchKey = int | None


def normal_quantile(p: float) -> float:
    """z such that the standard normal CDF at z equals p."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"normal quantile is defined on (0,1), got {p}")
    return float(ndtri(p))


def pessimistic_error_upper_bound(errors: float, count: float, cf: float) -> float:
    """Upper confidence limit on the error rate of a leaf with `errors` of `count` wrong."""
    if count < 1:
        raise ValueError("leaf count must be at least 1")
    if not 0 <= errors <= count:
        raise ValueError("error count must lie between 0 and the leaf count")
    if not 0.0 < cf <= 1.0:
        raise ValueError("confidence factor out of range (0,1]")

    if errors == 0:
        return 1.0 - cf ** (1.0 / count)

    f = errors / count
    z = 0.0 if cf == 1.0 else normal_quantile(1.0 - cf)
    z2 = z * z
    upper = (
        f + z2 / (2 * count) + z * math.sqrt(f / count - f * f / count + z2 / (4 * count * count))
    ) / (1 + z2 / count)
    return min(1.0, max(f, upper))


@dataclass(frozen=True)
class PruningParams:
    confidence_factor: float = 0.25
    min_leaf: int = 2

    def __post_init__(self) -> None:
        if not 0.0 < self.confidence_factor <= 1.0:
            raise ValueError("confidence factor out of range (0,1]")
        if self.min_leaf < 1:
            raise ValueError("minimum leaf size must be at least 1")


@dataclass(frozen=True)
class TreeNode:
    counts: tuple[int, ...]
    attribute: int | None = None
    # Numeric splits: rows with value <= threshold go to the first branch.
    threshold: float | None = None
    branches: tuple[tuple[BranchKey, TreeNode], ...] = ()

    @property
    def is_leaf(self) -> bool:
        return self.attribute is None

    @property
    def label(self) -> int:
        return majority_index(self.counts)

    @property
    def size(self) -> int:
        return sum(self.counts)

    @property
    def errors(self) -> int:
        return self.size - self.counts[self.label]

    def leaves(self) -> Iterator[TreeNode]:
        if self.is_leaf:
            yield self
            return
        for _, child in self.branches:
            yield from child.leaves()

    @property
    def internal_count(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + sum(child.internal_count for _, child in self.branches)

    @property
    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(child.depth for _, child in self.branches)

    def as_leaf(self) -> TreeNode:
        return TreeNode(counts=self.counts)


def branch_key(threshold: float | None, value: Value, impute: float) -> BranchKey:
    """Branch key for `value`; numeric splits key their two sides 0 and 1."""
    if threshold is not None:
        return 0 if numeric_value(value, impute) <= threshold else 1
    return None if value is None else int(value)


@dataclass(frozen=True)
class TreeModel:
    root: TreeNode
    means: Mapping[int, float]

    def classify(self, ds: Dataset, row: int) -> int:
        node = self.root
        values = ds.rows[row]
        while not node.is_leaf:
            key = branch_key(
                node.threshold, values[node.attribute], self.means.get(node.attribute, 0.0)
            )
            child = dict(node.branches).get(key)
            if child is None:
                return node.label
            node = child
        return node.label


# Growth


def _entropy(counts: np.ndarray) -> np.ndarray:
    """Entropy in bits of each row of a (partitions, classes) count array."""
    totals = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(totals > 0, counts / totals, 0.0)
        terms = np.where(p > 0, p * np.log2(p), 0.0)
    return -terms.sum(axis=-1)


def _split_scores(partitions: np.ndarray) -> tuple[float, float]:
    """(gain, gain ratio) of splitting the node into `partitions` count rows."""
    sizes = partitions.sum(axis=1)
    total = sizes.sum()
    gain = float(_entropy(partitions.sum(axis=0)) - np.dot(sizes / total, _entropy(partitions)))
    split_info = float(_entropy(sizes))
    if split_info <= 0:
        return gain, 0.0
    return gain, gain / split_info


@dataclass(frozen=True)
class _Split:
    attribute: int
    gain: float
    gain_ratio: float
    threshold: float | None = None


class _TreeGrower:
    def __init__(self, ds: Dataset, params: PruningParams, means: Mapping[int, float]) -> None:
        self.ds = ds
        self.params = params
        self.means = means
        self.width = len(ds.class_labels)
        self.features = feature_indices(ds)

    def value(self, row: int, attribute: int) -> Value:
        return self.ds.rows[row][attribute]

    def _counts(self, rows: Sequence[int]) -> tuple[int, ...]:
        return tuple(class_counts(self.ds, rows))

    def _nominal_split(self, rows: Sequence[int], attribute: int) -> _Split | None:
        groups: dict[BranchKey, np.ndarray] = {}
        for row in rows:
            value = self.value(row, attribute)
            key = None if value is None else int(value)
            counts = groups.setdefault(key, np.zeros(self.width))
            counts[self.ds.class_of(row)] += 1
        partitions = np.array(list(groups.values()))
        if np.count_nonzero(partitions.sum(axis=1) >= self.params.min_leaf) < 2:
            return None
        gain, ratio = _split_scores(partitions)
        return _Split(attribute=attribute, gain=gain, gain_ratio=ratio)

    def _numeric_split(self, rows: Sequence[int], attribute: int) -> _Split | None:
        mean = self.means[attribute]
        values = np.array([numeric_value(self.value(row, attribute), mean) for row in rows])
        labels = np.array([self.ds.class_of(row) for row in rows])
        order = np.argsort(values, kind="stable")
        values, labels = values[order], labels[order]

        one_hot = np.zeros((len(rows), self.width))
        one_hot[np.arange(len(rows)), labels] = 1.0
        left = np.cumsum(one_hot, axis=0)
        total = left[-1]

        best: _Split | None = None
        minimum = self.params.min_leaf
        for position in range(minimum - 1, len(rows) - minimum):
            if values[position] == values[position + 1]:
                continue
            gain, ratio = _split_scores(np.stack([left[position], total - left[position]]))
            if best is None or gain > best.gain:
                threshold = float((values[position] + values[position + 1]) / 2.0)
                best = _Split(attribute=attribute, gain=gain, gain_ratio=ratio, threshold=threshold)
        return best

    def _best_split(self, rows: Sequence[int]) -> _Split | None:
        best: _Split | None = None
        for attribute in self.features:
            if self.ds.attributes[attribute].is_nominal:
                split = self._nominal_split(rows, attribute)
            else:
                split = self._numeric_split(rows, attribute)
            if split is None or split.gain <= MIN_GAIN:
                continue
            if best is None or split.gain_ratio > best.gain_ratio:
                best = split
        return best

    def grow(self, rows: Sequence[int]) -> TreeNode:
        counts = self._counts(rows)
        size = len(rows)
        if max(counts) == size or size < 2 * self.params.min_leaf:
            return TreeNode(counts=counts)

        split = self._best_split(rows)
        if split is None:
            return TreeNode(counts=counts)

        partitions: dict[BranchKey, list[int]] = {}
        impute = self.means.get(split.attribute, 0.0)
        for row in rows:
            key = branch_key(split.threshold, self.value(row, split.attribute), impute)
            partitions.setdefault(key, []).append(row)

        if split.threshold is not None:
            keys: list[BranchKey] = [0, 1]
        else:
            declared = [key for key in partitions if key is not None]
            keys = sorted(declared) + ([None] if None in partitions else [])
        branches = tuple((key, self.grow(partitions[key])) for key in keys)
        return TreeNode(
            counts=counts,
            attribute=split.attribute,
            threshold=split.threshold,
            branches=branches,
        )


# Pruning


def _leaf_estimate(node: TreeNode, cf: float) -> float:
    return node.size * pessimistic_error_upper_bound(node.errors, node.size, cf)


def prune(node: TreeNode, cf: float) -> TreeNode:
    if node.is_leaf:
        return node
    pruned = TreeNode(
        counts=node.counts,
        attribute=node.attribute,
        threshold=node.threshold,
        branches=tuple((key, prune(child, cf)) for key, child in node.branches),
    )
    subtree = sum(_leaf_estimate(leaf, cf) for leaf in pruned.leaves())
    as_leaf = _leaf_estimate(pruned, cf)
    # Strictly greater: at -C 1 the estimates are the observed errors, so nothing is pruned.
    if subtree - as_leaf > PRUNE_TOLERANCE:
        LOGGER.debug(
            "Pruning subtree on attribute %s: %.4f > %.4f", node.attribute, subtree, as_leaf
        )
        return pruned.as_leaf()
    return pruned


def grow_pruned_tree(
    ds: Dataset, rows: Sequence[int], params: PruningParams, means: Mapping[int, float]
) -> TreeNode:
    root = _TreeGrower(ds, params, means).grow(rows)
    return prune(root, params.confidence_factor)


def build_pruned_tree(ds: Dataset, train_rows: Sequence[int], params: PruningParams) -> TreeModel:
    rows = known_class_rows(ds, train_rows)
    means = numeric_means(ds, rows)
    return TreeModel(root=grow_pruned_tree(ds, rows, params, means), means=means)


def pruning_params(options: Mapping[str, Any]) -> PruningParams:
    return PruningParams(confidence_factor=options["-C"], min_leaf=options["-M"])


def build_j48(ds: Dataset, train_rows: Sequence[int], options: Mapping[str, Any]) -> TreeModel:
    return build_pruned_tree(ds, train_rows, pruning_params(options))


PRUNING_OPTIONS = {
    "-C": LearnerOption(
        flag="-C",
        default=DEFAULT_CONFIDENCE,
        parse=parse_confidence_factor,
        description="confidence factor for pruning",
    ),
    "-M": LearnerOption(
        flag="-M",
        default=DEFAULT_MIN_LEAF,
        parse=parse_positive_int,
        description="minimum number of rows per leaf",
    ),
}
