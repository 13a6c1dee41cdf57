"""Learner factories, the name registry, and the `fit`/`predict` entry points."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence

from ..models import Dataset, ParameterAssignment

LOGGER = logging.getLogger(__name__)


class LearnerError(ValueError):
    """Raised for unusable learner options or training data; fails the job only."""


class Model(Protocol):
    def classify(self, ds: Dataset, row: int) -> int:
        """Index of the predicted class label."""
        ...


OptionParser = Callable[[str, str], Any]
BuildFunction = Callable[[Dataset, Sequence[int], Mapping[str, Any]], Model]


def parse_confidence_factor(flag: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise LearnerError(f"invalid value for {flag}: {text!r} is not a number") from exc
    if not math.isfinite(value) or not 0.0 < value <= 1.0:
        raise LearnerError("confidence factor out of range (0,1]")
    return value


def parse_positive_int(flag: str, text: str) -> int:
    try:
        value = int(text.strip())
    except ValueError as exc:
        raise LearnerError(f"invalid value for {flag}: {text!r} is not an integer") from exc
    if value < 1:
        raise LearnerError(f"invalid value for {flag}: must be at least 1")
    return value


@dataclass(frozen=True)
class LearnerOption:
    flag: str
    default: str
    parse: OptionParser
    description: str = ""


@dataclass(frozen=True)
class LearnerFactory:
    name: str
    options: Mapping[str, LearnerOption]
    build: BuildFunction

    @property
    def accepted_flags(self) -> tuple[str, ...]:
        return tuple(self.options)

    def check_value(self, flag: str, value: str) -> str | None:
        """Problem description if `value` would be rejected for `flag`, else None."""
        option = self.options.get(flag)
        if option is None:
            return f"unknown parameter {flag}"
        try:
            option.parse(flag, value)
        except LearnerError as exc:
            return str(exc)
        return None

    def bind(self, assignment: ParameterAssignment) -> dict[str, Any]:
        """Parsed option values, with defaults filled in for unbound flags."""
        bound = {flag: option.parse(flag, option.default) for flag, option in self.options.items()}
        for flag, value in assignment:
            option = self.options.get(flag)
            if option is None:
                raise LearnerError(f"unknown parameter {flag}")
            bound[flag] = option.parse(flag, value)
        return bound


class LearnerRegistry:
    def __init__(self) -> None:
        self._factories: dict[str, LearnerFactory] = {}

    def register(self, factory: LearnerFactory, *aliases: str) -> None:
        for name in (factory.name, *aliases):
            if name in self._factories:
                raise ValueError(f"learner name already registered: {name}")
            self._factories[name] = factory

    def names(self) -> list[str]:
        return sorted(self._factories)

    def get(self, name: str) -> LearnerFactory | None:
        return self._factories.get(name)

    def resolve(self, name: str) -> LearnerFactory:
        factory = self._factories.get(name)
        if factory is None:
            raise LearnerError(f"unknown classifier '{name}'")
        return factory

    def accepted_flags(self, name: str) -> tuple[str, ...]:
        return self.resolve(name).accepted_flags

    def check_value(self, name: str, flag: str, value: str) -> str | None:
        return self.resolve(name).check_value(flag, value)


def fit(
    factory: LearnerFactory,
    assignment: ParameterAssignment,
    ds: Dataset,
    train_rows: Iterable[int],
) -> Model:
    rows = list(train_rows)
    if not rows:
        raise LearnerError("training set is empty")
    options = factory.bind(assignment)
    LOGGER.debug("Fitting %s on %s rows with %s", factory.name, len(rows), options)
    return factory.build(ds, rows, options)


def predict(model: Model, ds: Dataset, row: int) -> str:
    return ds.class_labels[model.classify(ds, row)]
