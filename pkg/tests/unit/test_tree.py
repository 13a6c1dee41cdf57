import math
import random
import unittest

from flexdm.arff import load_arff
from flexdm.learners import (
    PruningParams,
    build_decision_list,
    build_pruned_tree,
    default_registry,
    fit,
    normal_quantile,
    pessimistic_error_upper_bound,
    predict,
)
from flexdm.learners.part import Condition, Rule
from flexdm.models import Attribute

from ._support import fixture, make_dataset


def _all_rows(ds) -> list[int]:
    return list(range(ds.num_instances))


def _quantile_by_bisection(p: float) -> float:
    low, high = -10.0, 10.0
    for _ in range(200):
        middle = (low + high) / 2.0
        if 0.5 * (1.0 + math.erf(middle / math.sqrt(2.0))) < p:
            low = middle
        else:
            high = middle
    return (low + high) / 2.0


class NormalQuantileTests(unittest.TestCase):
    def test_known_values(self) -> None:
        self.assertAlmostEqual(0.0, normal_quantile(0.5), places=12)
        self.assertAlmostEqual(0.6744897502, normal_quantile(0.75), places=8)
        self.assertAlmostEqual(1.9599639845, normal_quantile(0.975), places=8)

    def test_grid_matches_cdf_inversion(self) -> None:
        for step in range(1, 1000):
            p = step / 1000.0
            with self.subTest(p=p):
                self.assertAlmostEqual(_quantile_by_bisection(p), normal_quantile(p), places=7)

    def test_domain(self) -> None:
        for p in (0.0, 1.0, -0.1, 1.5):
            with self.subTest(p=p):
                with self.assertRaises(ValueError):
                    normal_quantile(p)


class ErrorBoundTests(unittest.TestCase):
    def test_zero_errors_closed_form(self) -> None:
        self.assertAlmostEqual(1.0 - 0.25 ** (1 / 7), pessimistic_error_upper_bound(0, 7, 0.25))
        self.assertEqual(0.0, pessimistic_error_upper_bound(0, 7, 1.0))

    def test_known_value(self) -> None:
        self.assertAlmostEqual(0.4708, pessimistic_error_upper_bound(2, 6, 0.25), delta=1e-3)

    def test_confidence_one_gives_observed_rate(self) -> None:
        self.assertAlmostEqual(0.25, pessimistic_error_upper_bound(3, 12, 1.0))

    def test_all_wrong_is_one(self) -> None:
        self.assertAlmostEqual(1.0, pessimistic_error_upper_bound(4, 4, 0.25))

    def test_argument_validation(self) -> None:
        for errors, count, cf in ((1, 0, 0.25), (5, 4, 0.25), (-1, 4, 0.25), (1, 4, 0.0), (1, 4, 1.1)):
            with self.subTest(errors=errors, count=count, cf=cf):
                with self.assertRaises(ValueError):
                    pessimistic_error_upper_bound(errors, count, cf)

    def test_bound_is_monotone(self) -> None:
        rng = random.Random(7)
        for _ in range(2000):
            count = rng.randint(1, 50)
            errors = rng.randint(0, count)
            cf = rng.uniform(0.01, 1.0)
            bound = pessimistic_error_upper_bound(errors, count, cf)
            with self.subTest(errors=errors, count=count, cf=cf):
                self.assertGreaterEqual(bound, errors / count - 1e-12)
                self.assertLessEqual(bound, 1.0)
                if errors < count:
                    self.assertLessEqual(
                        bound, pessimistic_error_upper_bound(errors + 1, count, cf) + 1e-12
                    )
                looser = rng.uniform(0.01, cf)
                self.assertGreaterEqual(
                    pessimistic_error_upper_bound(errors, count, looser) + 1e-12, bound
                )


class PruningParamsTests(unittest.TestCase):
    def test_validation(self) -> None:
        with self.assertRaises(ValueError):
            PruningParams(confidence_factor=0.0)
        with self.assertRaises(ValueError):
            PruningParams(min_leaf=0)
        self.assertEqual(1.0, PruningParams(confidence_factor=1.0).confidence_factor)


class DecisionTreeTests(unittest.TestCase):
    def test_xor_grows_full_depth_tree(self) -> None:
        ds = load_arff(fixture("xor.arff"))

        model = build_pruned_tree(ds, _all_rows(ds), PruningParams(0.25, 1))

        self.assertEqual(1, model.root.attribute)
        self.assertEqual(2, model.root.depth)
        self.assertEqual(4, len(list(model.root.leaves())))
        self.assertEqual(
            [ds.class_of(row) for row in _all_rows(ds)],
            [model.classify(ds, row) for row in _all_rows(ds)],
        )

    def test_noisy_split_is_pruned_at_low_confidence(self) -> None:
        ds = load_arff(fixture("noisy.arff"))

        model = build_pruned_tree(ds, _all_rows(ds), PruningParams(0.1, 2))

        self.assertTrue(model.root.is_leaf)
        self.assertEqual("yes", ds.class_labels[model.root.label])

    def test_confidence_one_never_prunes(self) -> None:
        ds = load_arff(fixture("noisy.arff"))

        model = build_pruned_tree(ds, _all_rows(ds), PruningParams(1.0, 2))

        self.assertFalse(model.root.is_leaf)
        self.assertEqual(0, model.root.attribute)
        self.assertEqual(1, model.root.internal_count)

    def test_missing_values_take_their_own_branch_or_the_mean(self) -> None:
        ds = load_arff(fixture("weather.arff"))

        model = build_pruned_tree(ds, _all_rows(ds), PruningParams(1.0, 1))

        for row in _all_rows(ds):
            self.assertIn(model.classify(ds, row), (0, 1))

    def test_numeric_threshold_is_a_midpoint(self) -> None:
        ds = load_arff(fixture("clusters.arff"))

        model = build_pruned_tree(ds, _all_rows(ds), PruningParams())

        self.assertEqual(0, model.root.attribute)
        self.assertAlmostEqual(5.0, model.root.threshold)
        self.assertEqual(
            ["left"] * 5 + ["right"] * 5,
            [ds.class_labels[model.classify(ds, row)] for row in _all_rows(ds)],
        )

    def test_unseen_nominal_value_falls_back_to_node_majority(self) -> None:
        ds = make_dataset(
            [("red", "yes")] * 3 + [("green", "no")] * 3 + [("blue", "no")],
            [Attribute("colour", ("red", "green", "blue")), Attribute("class", ("yes", "no"))],
        )

        model = build_pruned_tree(ds, range(6), PruningParams(1.0, 1))

        self.assertEqual(0, model.root.attribute)
        self.assertEqual("yes", ds.class_labels[model.classify(ds, 6)])

    def test_j48_factory_binds_options(self) -> None:
        ds = load_arff(fixture("noisy.arff"))
        factory = default_registry().resolve("weka.classifiers.trees.J48")

        pruned = fit(factory, (("-C", "0.1"),), ds, _all_rows(ds))
        unpruned = fit(factory, (("-C", "1"),), ds, _all_rows(ds))

        self.assertTrue(pruned.root.is_leaf)
        self.assertFalse(unpruned.root.is_leaf)


class DecisionListTests(unittest.TestCase):
    def test_rules_come_from_largest_leaves(self) -> None:
        ds = load_arff(fixture("part.arff"))

        model = build_decision_list(ds, _all_rows(ds), PruningParams())

        self.assertEqual(
            (
                Rule(conditions=(Condition(attribute=0, key=0),), label=0, covered=7),
                Rule(conditions=(), label=1, covered=3),
            ),
            model.rules,
        )
        self.assertEqual(0, model.default)

    def test_decision_list_classifies_training_rows(self) -> None:
        ds = load_arff(fixture("xor.arff"))
        factory = default_registry().resolve("part")

        model = fit(factory, (("-M", "1"),), ds, _all_rows(ds))

        self.assertEqual(
            [ds.class_labels[ds.class_of(row)] for row in _all_rows(ds)],
            [predict(model, ds, row) for row in _all_rows(ds)],
        )

    def test_fully_pruned_tree_gives_one_catch_all_rule(self) -> None:
        ds = load_arff(fixture("noisy.arff"))

        model = build_decision_list(ds, _all_rows(ds), PruningParams(0.1, 2))

        self.assertEqual(1, len(model.rules))
        self.assertEqual((), model.rules[0].conditions)
        self.assertEqual("yes", predict(model, ds, 9))


if __name__ == "__main__":
    unittest.main()
