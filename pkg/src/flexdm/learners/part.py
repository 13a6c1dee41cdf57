"""PART-style decision list: one rule per pruned tree, from its largest leaf."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Iterator, Mapping, Sequence

from ..models import Dataset
from .base import known_class_rows, majority_label, numeric_means
from .tree import BranchKey, PruningParams, TreeNode, branch_key, grow_pruned_tree, pruning_params

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class Condition:
    attribute: int
    # Nominal tests compare the branch key directly; numeric tests use the
    # threshold with key 0 meaning "<=".
    key: BranchKey
    threshold: float | None = None

    def matches(self, ds: Dataset, row: int, means: Mapping[int, float]) -> bool:
        value = ds.rows[row][self.attribute]
        return branch_key(self.threshold, value, means.get(self.attribute, 0.0)) == self.key


@dataclass(frozen=True)
class Rule:
    conditions: tuple[Condition, ...]
    label: int
    covered: int

    def matches(self, ds: Dataset, row: int, means: Mapping[int, float]) -> bool:
        return all(condition.matches(ds, row, means) for condition in self.conditions)


@dataclass(frozen=True)
class DecisionListModel:
    rules: tuple[Rule, ...]
    default: int
    means: Mapping[int, float]

    def classify(self, ds: Dataset, row: int) -> int:
        for rule in self.rules:
            if rule.matches(ds, row, self.means):
                return rule.label
        return self.default


def _leaf_paths(
    node: TreeNode, path: tuple[Condition, ...] = ()
) -> Iterator[tuple[tuple[Condition, ...], TreeNode]]:
    if node.is_leaf:
        yield path, node
        return
    for key, child in node.branches:
        condition = Condition(attribute=node.attribute, key=key, threshold=node.threshold)
        yield from _leaf_paths(child, (*path, condition))


def _largest_leaf(root: TreeNode) -> tuple[tuple[Condition, ...], TreeNode]:
    best: tuple[tuple[Condition, ...], TreeNode] | None = None
    for path, leaf in _leaf_paths(root):
        if best is None or leaf.size > best[1].size:
            best = (path, leaf)
    assert best is not None
    return best


def build_decision_list(
    ds: Dataset, train_rows: Sequence[int], params: PruningParams
) -> DecisionListModel:
    rows = known_class_rows(ds, train_rows)
    means = numeric_means(ds, rows)
    default = majority_label(ds, rows)

    rules: list[Rule] = []
    remaining = list(rows)
    while remaining:
        root = grow_pruned_tree(ds, remaining, params, means)
        conditions, leaf = _largest_leaf(root)
        rule = Rule(conditions=conditions, label=leaf.label, covered=leaf.size)
        uncovered = [row for row in remaining if not rule.matches(ds, row, means)]
        if len(uncovered) == len(remaining):
            # Guard against an empty rule.
            LOGGER.warning("Rule %s covers no remaining rows; stopping extraction", rule)
            break
        rules.append(rule)
        remaining = uncovered

    LOGGER.debug("Decision list has %s rules", len(rules))
    return DecisionListModel(rules=tuple(rules), default=default, means=means)


def build_part(
    ds: Dataset, train_rows: Sequence[int], options: Mapping[str, Any]
) -> DecisionListModel:
    return build_decision_list(ds, train_rows, pruning_params(options))
