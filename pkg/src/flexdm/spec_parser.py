"""Parsing and validation of the XML experiment specification.

The accepted document shape is the one described by `flexdm.dtd`::

    <flexdm>
      <dataset name="health.arff" test="leavexval" results="matrix">
        <classifier name="weka.classifiers.trees.J48">
          <parameter name="-C" value="[0.1:0.1:1.0]"/>
        </classifier>
      </dataset>
    </flexdm>

Validation is done here rather than by a DTD processor so every error can
name the offending element and its line.
"""

from __future__ import annotations

import logging
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import TYPE_CHECKING, Any

from lxml import etree

from .arff import ArffError, load_arff
from .models import (
    ClassifierSpec,
    Dataset,
    DatasetSpec,
    Diagnostic,
    ExperimentSpec,
    ListValue,
    ParameterSpec,
    RangeValue,
    ResultOptions,
    ScalarValue,
    TestStrategy,
    ValueSpec,
)
from .planner import boundary_values, format_decimal, strategy_token

if TYPE_CHECKING:
    from .learners.registry import LearnerRegistry

LOGGER = logging.getLogger(__name__)

DOCTYPE = '<!DOCTYPE flexdm SYSTEM "flexdm.dtd">'
DEFAULT_SPLIT_PERCENT = Decimal(66)
DEFAULT_FOLDS = 10
RESULT_TOKENS = {"accuracy": False, "matrix": True}

_ALLOWED_ATTRIBUTES = {
    "flexdm": (),
    "dataset": ("name", "test", "results"),
    "classifier": ("name",),
    "parameter": ("name", "value"),
}
_REQUIRED_ATTRIBUTES = {
    "flexdm": (),
    "dataset": ("name",),
    "classifier": ("name",),
    "parameter": ("name", "value"),
}


class SpecError(ValueError):
    """Base error for experiment specs; carries the source location."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None) -> None:
        self.message = message
        self.line = line
        self.column = column
        super().__init__(self._describe())

    def _describe(self) -> str:
        if self.line is None:
            return self.message
        if self.column is None:
            return f"{self.message} (line {self.line})"
        return f"{self.message} (line {self.line}, column {self.column})"


class SpecSyntaxError(SpecError):
    """The document is not well-formed XML."""


class SpecValidationError(SpecError):
    """The document is well-formed but does not follow the schema."""


class ValueSpecError(SpecError):
    """A parameter value-spec is malformed."""


# Value specs


def _parse_decimal(component: str, text: str) -> Decimal:
    try:
        value = Decimal(component.strip())
    except InvalidOperation as exc:
        raise ValueSpecError(f"range '{text}' has a non-decimal component '{component}'") from exc
    if not value.is_finite():
        raise ValueSpecError(f"range '{text}' has a non-decimal component '{component}'")
    return value


def parse_value_spec(text: str) -> ValueSpec:
    if not text or not text.strip():
        raise ValueSpecError("value must be non-empty")

    stripped = text.strip()
    if stripped.startswith("["):
        if not stripped.endswith("]"):
            raise ValueSpecError(f"unterminated range '{text}'")
        parts = stripped[1:-1].split(":")
        if len(parts) != 3:
            raise ValueSpecError(f"range '{text}' must have the form [start:step:end]")
        start, step, end = (_parse_decimal(part, text) for part in parts)
        if step <= 0:
            raise ValueSpecError(f"range '{text}' step must be positive")
        if start > end:
            raise ValueSpecError(f"range '{text}' start must not exceed its end")
        return RangeValue(start=start, step=step, end=end)

    if stripped.startswith("{"):
        if not stripped.endswith("}"):
            raise ValueSpecError(f"unterminated list '{text}'")
        inner = stripped[1:-1]
        if not inner.strip():
            raise ValueSpecError(f"list '{text}' must contain at least one value")
        items = tuple(item.strip() for item in inner.split(","))
        if any(not item for item in items):
            raise ValueSpecError(f"list '{text}' has an empty element")
        return ListValue(items=items)

    return ScalarValue(text=text)


def format_value_spec(vs: ValueSpec) -> str:
    if isinstance(vs, RangeValue):
        return f"[{format_decimal(vs.start)}:{format_decimal(vs.step)}:{format_decimal(vs.end)}]"
    if isinstance(vs, ListValue):
        return "{" + ",".join(vs.items) + "}"
    return vs.text


# Attribute tokens


def _parse_seed(raw: str, token: str) -> int:
    try:
        seed = int(raw)
    except ValueError as exc:
        raise ValueError(f"test token '{token}' has a non-integer seed '{raw}'") from exc
    if seed < 0:
        raise ValueError(f"test token '{token}' seed must be non-negative")
    return seed


def parse_test_token(token: str) -> TestStrategy:
    """Parse `leavexval`, `xval[:k[:seed]]` or `split[:pct[:seed]]`."""
    parts = token.strip().lower().split(":")
    kind = parts[0]
    if kind == "leavexval":
        if len(parts) != 1:
            raise ValueError(f"test token '{token}' takes no arguments")
        return TestStrategy.leave_one_out()

    if kind not in ("xval", "split") or len(parts) > 3:
        raise ValueError(
            f"unknown test strategy '{token}'; expected leavexval, xval[:k] or split[:pct]"
        )
    seed = _parse_seed(parts[2], token) if len(parts) == 3 else 1

    if kind == "xval":
        if len(parts) == 1:
            return TestStrategy.k_fold(DEFAULT_FOLDS, seed)
        try:
            folds = int(parts[1])
        except ValueError as exc:
            raise ValueError(f"test token '{token}' has a non-integer fold count") from exc
        if folds < 2:
            raise ValueError(f"test token '{token}' needs at least 2 folds")
        return TestStrategy.k_fold(folds, seed)

    percent = DEFAULT_SPLIT_PERCENT
    if len(parts) >= 2:
        try:
            percent = Decimal(parts[1])
        except InvalidOperation as exc:
            raise ValueError(f"test token '{token}' has a non-decimal percentage") from exc
        if not percent.is_finite() or not Decimal(0) < percent < Decimal(100):
            raise ValueError(f"test token '{token}' percentage must be between 0 and 100")
    return TestStrategy.percentage_split(percent / 100, seed)


def parse_results_token(token: str) -> ResultOptions:
    normalized = token.strip().lower()
    if normalized not in RESULT_TOKENS:
        raise ValueError(f"unknown results option '{token}'; expected accuracy or matrix")
    return ResultOptions(include_matrix=RESULT_TOKENS[normalized])


# Documents


def _element_children(element: Any) -> list[Any]:
    children = []
    if element.text and element.text.strip():
        raise SpecValidationError(f"unexpected text inside <{element.tag}>", element.sourceline)
    for child in element:
        if isinstance(child.tag, str):
            children.append(child)
        if child.tail and child.tail.strip():
            raise SpecValidationError(f"unexpected text inside <{element.tag}>", child.sourceline)
    return children


def _check_element(element: Any, expected: str) -> None:
    if element.tag != expected:
        raise SpecValidationError(
            f"unknown element <{element.tag}>; expected <{expected}>", element.sourceline
        )
    allowed = _ALLOWED_ATTRIBUTES[expected]
    for name in element.attrib:
        if name not in allowed:
            raise SpecValidationError(
                f"unknown attribute '{name}' on <{expected}>", element.sourceline
            )
    for name in _REQUIRED_ATTRIBUTES[expected]:
        if name not in element.attrib:
            raise SpecValidationError(
                f"{expected} missing required attribute '{name}'", element.sourceline
            )


def _parse_parameter(element: Any) -> ParameterSpec:
    _check_element(element, "parameter")
    line = element.sourceline
    if _element_children(element):
        raise SpecValidationError("<parameter> must be empty", line)

    name = element.get("name").strip()
    if len(name) < 2 or not name.startswith("-"):
        raise SpecValidationError(
            f"parameter name '{name}' must be a flag such as '-C'", line
        )
    try:
        value = parse_value_spec(element.get("value"))
    except ValueSpecError as exc:
        raise ValueSpecError(f"parameter {name}: {exc.message}", line) from exc
    return ParameterSpec(name=name, value=value, line=line)


def _parse_classifier(element: Any) -> ClassifierSpec:
    _check_element(element, "classifier")
    line = element.sourceline
    name = element.get("name").strip()
    if not name:
        raise SpecValidationError("classifier name must be non-empty", line)

    parameters: list[ParameterSpec] = []
    seen: set[str] = set()
    for child in _element_children(element):
        parameter = _parse_parameter(child)
        if parameter.name in seen:
            raise SpecValidationError(
                f"duplicate parameter {parameter.name} on classifier '{name}'", parameter.line
            )
        seen.add(parameter.name)
        parameters.append(parameter)
    return ClassifierSpec(name=name, parameters=tuple(parameters), line=line)


def _parse_dataset(element: Any) -> DatasetSpec:
    _check_element(element, "dataset")
    line = element.sourceline
    name = element.get("name").strip()
    if not name:
        raise SpecValidationError("dataset name must be non-empty", line)

    try:
        test = parse_test_token(element.get("test", "xval"))
        results = parse_results_token(element.get("results", "accuracy"))
    except ValueError as exc:
        raise SpecValidationError(f"dataset '{name}': {exc}", line) from exc

    classifiers = tuple(_parse_classifier(child) for child in _element_children(element))
    if not classifiers:
        raise SpecValidationError(f"dataset '{name}' requires at least one classifier", line)
    return DatasetSpec(
        name=name, test=test, results=results, classifiers=classifiers, line=line
    )


def _xml_parser() -> Any:
    return etree.XMLParser(
        load_dtd=False,
        no_network=True,
        resolve_entities=False,
        remove_comments=True,
        remove_pis=True,
    )


def parse_spec(xml_text: str | bytes) -> ExperimentSpec:
    data = xml_text.encode("utf-8") if isinstance(xml_text, str) else xml_text
    try:
        root = etree.fromstring(data, _xml_parser())
    except etree.XMLSyntaxError as exc:
        raise SpecSyntaxError(f"malformed XML: {exc.msg}", exc.lineno, exc.offset) from exc

    _check_element(root, "flexdm")
    datasets = tuple(_parse_dataset(child) for child in _element_children(root))
    if not datasets:
        raise SpecValidationError("at least one dataset required", root.sourceline)
    return ExperimentSpec(datasets=datasets)


def load_spec(path: Path) -> ExperimentSpec:
    return parse_spec(Path(path).read_bytes())


def spec_to_xml(spec: ExperimentSpec) -> str:
    """Canonical XML with every default written out."""
    root = etree.Element("flexdm")
    for dataset in spec.datasets:
        dataset_element = etree.SubElement(root, "dataset")
        dataset_element.set("name", dataset.name)
        dataset_element.set("test", strategy_token(dataset.test))
        dataset_element.set("results", "matrix" if dataset.results.include_matrix else "accuracy")
        for classifier in dataset.classifiers:
            classifier_element = etree.SubElement(dataset_element, "classifier")
            classifier_element.set("name", classifier.name)
            for parameter in classifier.parameters:
                parameter_element = etree.SubElement(classifier_element, "parameter")
                parameter_element.set("name", parameter.name)
                parameter_element.set("value", format_value_spec(parameter.value))
    body = etree.tostring(root, pretty_print=True, encoding="unicode")
    return f"{DOCTYPE}\n{body}"


# Semantic validation


def resolve_dataset_path(name: str, base_dir: Path | None) -> Path:
    path = Path(name)
    if base_dir is None or path.is_absolute():
        return path
    return Path(base_dir) / path


def _located(kind: str, name: str, line: int | None) -> str:
    if line is None:
        return f"{kind} '{name}'"
    return f"{kind} '{name}' (line {line})"


def _validate_dataset_file(
    dataset: DatasetSpec,
    base_dir: Path | None,
    loaded: dict[str, Dataset] | None,
) -> list[Diagnostic]:
    location = _located("dataset", dataset.name, dataset.line)
    path = resolve_dataset_path(dataset.name, base_dir)
    if not path.is_file():
        return [Diagnostic("error", location, f"dataset file not found: {path}")]

    try:
        ds = load_arff(path)
    except (ArffError, OSError, UnicodeDecodeError) as exc:
        return [Diagnostic("error", location, f"{path} does not parse as ARFF: {exc}")]

    diagnostics: list[Diagnostic] = []
    if not ds.class_attribute.is_nominal:
        diagnostics.append(
            Diagnostic(
                "error",
                location,
                f"class attribute '{ds.class_attribute.name}' must be nominal",
            )
        )
    if ds.num_instances == 0:
        diagnostics.append(Diagnostic("warning", location, "dataset has no instances"))
    if loaded is not None:
        loaded[dataset.name] = ds
    return diagnostics


def validate_spec(
    spec: ExperimentSpec,
    registry: LearnerRegistry,
    *,
    base_dir: Path | None = None,
    loaded: dict[str, Dataset] | None = None,
) -> list[Diagnostic]:
    """Check names, files and flags; returns one Diagnostic per problem.

    Dataset paths resolve against `base_dir`. Parsed datasets are stored in
    `loaded` (keyed by the name used in the spec) when a dict is given.
    """
    diagnostics: list[Diagnostic] = []
    checked_files: set[str] = set()
    for dataset in spec.datasets:
        if dataset.name not in checked_files:
            checked_files.add(dataset.name)
            diagnostics.extend(_validate_dataset_file(dataset, base_dir, loaded))

        for classifier in dataset.classifiers:
            location = _located("classifier", classifier.name, classifier.line)
            factory = registry.get(classifier.name)
            if factory is None:
                diagnostics.append(
                    Diagnostic("error", location, f"unknown classifier '{classifier.name}'")
                )
                continue

            for parameter in classifier.parameters:
                if parameter.name not in factory.options:
                    diagnostics.append(
                        Diagnostic("error", location, f"unknown parameter {parameter.name}")
                    )
                    continue
                for value in boundary_values(parameter.value):
                    problem = factory.check_value(parameter.name, value)
                    if problem is not None:
                        diagnostics.append(
                            Diagnostic(
                                "warning",
                                location,
                                f"{parameter.name}={value} will fail: {problem}",
                            )
                        )
                        break

    for diagnostic in diagnostics:
        LOGGER.debug("Spec diagnostic: %s", diagnostic)
    return diagnostics
