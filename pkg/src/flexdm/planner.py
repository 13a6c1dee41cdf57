"""Expansion of an experiment spec into a deterministic plan of jobs.

Plan order is dataset declaration order, then classifier declaration order,
then the odometer product of the classifier's parameter values (the last
declared parameter varies fastest).

The canonical job string is a stability contract: job ids, result file names
and summary ordering all derive from it, so changing its format invalidates
existing journals.
"""

from __future__ import annotations

import itertools
import logging
import math
from decimal import Context, Decimal, localcontext

from .models import (
    DatasetSpec,
    ExperimentSpec,
    Job,
    JobPlan,
    ListValue,
    ParameterAssignment,
    RangeValue,
    ResultOptions,
    ScalarValue,
    TestStrategy,
    ValueSpec,
)
from .persistence import job_id as stable_job_id
from .settings import DEFAULT_JOB_CAP

LOGGER = logging.getLogger(__name__)

MAX_RANGE_DIGITS = 1000


class PlanError(ValueError):
    """Raised when a spec cannot be expanded into a valid plan."""


def format_decimal(value: Decimal) -> str:
    """Shortest plain decimal text, trailing zeros stripped ("1.0" -> "1")."""
    if value == 0:
        return "0"
    exact = Context(prec=max(28, len(value.as_tuple().digits)))
    return format(value.normalize(exact), "f")


def strategy_token(strategy: TestStrategy) -> str:
    """Canonical text for a test strategy; a non-default seed is appended."""
    if strategy.kind == "leavexval":
        return "leavexval"
    if strategy.kind == "xval":
        token = f"xval:{strategy.k}"
    elif strategy.kind == "split":
        fraction = strategy.train_fraction if strategy.train_fraction is not None else Decimal(0)
        token = f"split:{format_decimal(fraction * 100)}"
    else:
        raise ValueError(f"Unknown test strategy kind: {strategy.kind}")
    if strategy.seed != 1:
        token = f"{token}:{strategy.seed}"
    return token


def expand_value_spec(vs: ValueSpec) -> list[str]:
    if isinstance(vs, ScalarValue):
        return [vs.text]
    if isinstance(vs, ListValue):
        return list(vs.items)
    if isinstance(vs, RangeValue):
        count = range_count(vs)
        with localcontext(Context(prec=_range_precision(vs) + len(str(count)))):
            return [format_decimal(vs.start + index * vs.step) for index in range(count)]
    raise TypeError(f"Unsupported value spec: {vs!r}")


def _range_precision(vs: RangeValue) -> int:
    """Digits needed for exact arithmetic on the range's bounds and step."""
    components = (vs.start, vs.step, vs.end)
    nonzero = [value for value in components if value != 0]
    highest = max((value.adjusted() for value in nonzero), default=0)
    lowest = min(int(value.as_tuple().exponent) for value in components)
    digits = highest - lowest + 3
    if digits > MAX_RANGE_DIGITS:
        raise PlanError(
            f"range [{vs.start}:{vs.step}:{vs.end}] spans too many digits to expand exactly"
        )
    return max(28, digits)


def range_count(vs: RangeValue) -> int:
    with localcontext(Context(prec=_range_precision(vs))):
        return int((vs.end - vs.start) // vs.step) + 1


def range_value(vs: RangeValue, index: int) -> str:
    """Canonical text of the `index`-th value of a range."""
    with localcontext(Context(prec=_range_precision(vs) + len(str(index)))):
        return format_decimal(vs.start + index * vs.step)


def boundary_values(vs: ValueSpec) -> list[str]:
    """Values that stand in for the whole spec when checking a learner option.

    A range is represented by its first two values and its last one: options
    are intervals, possibly integral, so these decide every value in between.
    """
    if not isinstance(vs, RangeValue):
        return expand_value_spec(vs)
    last = range_count(vs) - 1
    return [range_value(vs, index) for index in sorted({0, min(1, last), last})]


def _value_count(vs: ValueSpec) -> int:
    if isinstance(vs, RangeValue):
        return range_count(vs)
    if isinstance(vs, ListValue):
        return len(vs.items)
    return 1


def count_jobs(spec: ExperimentSpec) -> int:
    """Number of jobs `expand_jobs` would produce, without building them."""
    return sum(
        math.prod(_value_count(parameter.value) for parameter in classifier.parameters)
        for dataset in spec.datasets
        for classifier in dataset.classifiers
    )


def canonical_job_string(
    dataset_name: str,
    test: TestStrategy,
    classifier_name: str,
    assignment: ParameterAssignment,
) -> str:
    params = ";".join(f"{flag}={value}" for flag, value in assignment)
    return f"{dataset_name}|{strategy_token(test)}|{classifier_name}|{params}"


def make_job(
    dataset_name: str,
    test: TestStrategy,
    results: ResultOptions,
    classifier_name: str,
    assignment: ParameterAssignment,
) -> Job:
    canonical = canonical_job_string(dataset_name, test, classifier_name, assignment)
    return Job(
        dataset_name=dataset_name,
        test=test,
        results=results,
        classifier_name=classifier_name,
        assignment=assignment,
        test_token=strategy_token(test),
        canonical=canonical,
        job_id=stable_job_id(canonical),
    )


def _dataset_jobs(dataset: DatasetSpec) -> list[Job]:
    jobs: list[Job] = []
    for classifier in dataset.classifiers:
        flags = [parameter.name for parameter in classifier.parameters]
        value_lists = [expand_value_spec(parameter.value) for parameter in classifier.parameters]
        # itertools.product is odometer ordered: the last iterable varies fastest.
        for combination in itertools.product(*value_lists):
            assignment = tuple(zip(flags, combination))
            jobs.append(
                make_job(dataset.name, dataset.test, dataset.results, classifier.name, assignment)
            )
    return jobs


def check_job_cap(spec: ExperimentSpec, job_cap: int = DEFAULT_JOB_CAP) -> int:
    """Job count of the spec; raises PlanError before anything is built if it is over the cap."""
    total = count_jobs(spec)
    if total > job_cap:
        raise PlanError(f"plan has {total} jobs, exceeding the cap of {job_cap}")
    return total


def expand_jobs(spec: ExperimentSpec, *, job_cap: int = DEFAULT_JOB_CAP) -> JobPlan:
    check_job_cap(spec, job_cap)

    jobs: list[Job] = []
    seen: dict[str, str] = {}
    for dataset in spec.datasets:
        for job in _dataset_jobs(dataset):
            previous = seen.get(job.job_id)
            if previous is not None:
                if previous == job.canonical:
                    raise PlanError(f"duplicate job in plan: {job.canonical}")
                raise PlanError(
                    f"job id collision between {previous} and {job.canonical}"
                )
            seen[job.job_id] = job.canonical
            jobs.append(job)

    LOGGER.debug("Expanded spec into %s jobs", len(jobs))
    return JobPlan(jobs=tuple(jobs))
