"""The built-in learners under their WEKA class names and short aliases."""

from __future__ import annotations

from .bayes import NAIVE_BAYES_OPTIONS, build_naive_bayes
from .knn import KNN_OPTIONS, build_knn
from .part import build_part
from .registry import LearnerFactory, LearnerRegistry
from .rules import ONER_OPTIONS, ZEROR_OPTIONS, build_oner, build_zeror
from .tree import PRUNING_OPTIONS, build_j48

J48 = LearnerFactory(name="weka.classifiers.trees.J48", options=PRUNING_OPTIONS, build=build_j48)
PART = LearnerFactory(name="weka.classifiers.rules.PART", options=PRUNING_OPTIONS, build=build_part)
NAIVE_BAYES = LearnerFactory(
    name="weka.classifiers.bayes.NaiveBayes", options=NAIVE_BAYES_OPTIONS, build=build_naive_bayes
)
IBK = LearnerFactory(name="weka.classifiers.lazy.IBk", options=KNN_OPTIONS, build=build_knn)
ZEROR = LearnerFactory(name="weka.classifiers.rules.ZeroR", options=ZEROR_OPTIONS, build=build_zeror)
ONER = LearnerFactory(name="weka.classifiers.rules.OneR", options=ONER_OPTIONS, build=build_oner)

BUILTIN_LEARNERS = (
    (J48, "j48"),
    (PART, "part"),
    (NAIVE_BAYES, "nb"),
    (IBK, "knn"),
    (ZEROR, "zeror"),
    (ONER, "oner"),
)


def default_registry() -> LearnerRegistry:
    registry = LearnerRegistry()
    for factory, alias in BUILTIN_LEARNERS:
        registry.register(factory, alias)
    return registry
