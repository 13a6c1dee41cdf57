"""Evaluation of a single job: test strategy, confusion matrix, accuracy.

All randomness comes from `Lcg64` seeded by the job's test strategy, so a
job's result does not depend on which worker runs it or when.
"""

from __future__ import annotations

import logging
import time
from decimal import ROUND_CEILING, Decimal
from typing import Iterable, Sequence

from .learners import LearnerError, LearnerRegistry, fit
from .models import ConfusionMatrix, Dataset, EvalResult, Job, JobStatus, TestStrategy

LOGGER = logging.getLogger(__name__)

LCG_MULTIPLIER = 6364136223846793005
LCG_INCREMENT = 1442695040888963407
_MASK_64 = (1 << 64) - 1


class EvaluationError(ValueError):
    """Raised when a dataset cannot be evaluated with the requested strategy."""


class Lcg64:
    """64-bit linear congruential generator with Knuth's MMIX constants."""

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK_64

    def next(self) -> int:
        self.state = (self.state * LCG_MULTIPLIER + LCG_INCREMENT) & _MASK_64
        return self.state

    def below(self, n: int) -> int:
        """Uniform draw from [0, n) using the high 32 bits."""
        if n < 1:
            raise ValueError("bound must be positive")
        return ((self.next() >> 32) * n) >> 32


def shuffled_rows(n: int, seed: int) -> list[int]:
    rows = list(range(n))
    rng = Lcg64(seed)
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        rows[i], rows[j] = rows[j], rows[i]
    return rows


def stratified_folds(ds: Dataset, k: int, seed: int) -> list[list[int]]:
    n = ds.num_instances
    if k < 2:
        raise EvaluationError(f"cross-validation needs at least 2 folds, got {k}")
    if k > n:
        raise EvaluationError(f"cannot make {k} folds from {n} instances")

    order = shuffled_rows(n, seed)
    by_class: dict[int | None, list[int]] = {label: [] for label in range(len(ds.class_labels))}
    by_class[None] = []
    for row in order:
        by_class[ds.class_of(row)].append(row)

    folds: list[list[int]] = [[] for _ in range(k)]
    position = 0
    for label in [*range(len(ds.class_labels)), None]:
        for row in by_class[label]:
            folds[position % k].append(row)
            position += 1
    return [sorted(fold) for fold in folds]


def split_rows(n: int, train_fraction: Decimal, seed: int) -> tuple[list[int], list[int]]:
    """Seeded shuffle, then the first ceil(fraction * n) rows train."""
    cut = int((Decimal(train_fraction) * n).to_integral_value(rounding=ROUND_CEILING))
    order = shuffled_rows(n, seed)
    return order[:cut], order[cut:]


def accuracy(matrix: ConfusionMatrix) -> float:
    total = matrix.total
    if total == 0:
        raise EvaluationError("accuracy undefined for an empty confusion matrix")
    return matrix.trace / total


def holdout_partitions(ds: Dataset, strategy: TestStrategy) -> list[tuple[list[int], list[int]]]:
    """(train, test) row lists in evaluation order for `strategy`."""
    n = ds.num_instances
    everything = range(n)
    if strategy.kind == "leavexval":
        if n < 2:
            raise EvaluationError(f"leave-one-out needs at least 2 instances, got {n}")
        return [([row for row in everything if row != held], [held]) for held in everything]

    if strategy.kind == "xval":
        folds = stratified_folds(ds, strategy.k or 0, strategy.seed)
        partitions = []
        for fold in folds:
            held = set(fold)
            partitions.append(([row for row in everything if row not in held], fold))
        return partitions

    if strategy.kind == "split":
        if n < 2:
            raise EvaluationError(f"percentage split needs at least 2 instances, got {n}")
        train, test = split_rows(n, strategy.train_fraction or Decimal(0), strategy.seed)
        if not train or not test:
            raise EvaluationError(
                f"percentage split leaves {len(train)} training and {len(test)} test instances"
            )
        return [(train, test)]

    raise EvaluationError(f"unknown test strategy {strategy.kind}")


def _empty_counts(width: int) -> list[list[int]]:
    return [[0] * width for _ in range(width)]


def _freeze(labels: Sequence[str], counts: Iterable[Iterable[int]]) -> ConfusionMatrix:
    return ConfusionMatrix(labels=tuple(labels), counts=tuple(tuple(row) for row in counts))


def failed_result(job: Job, ds: Dataset | None, message: str, wall_time: float) -> EvalResult:
    labels = ds.class_labels if ds is not None else ()
    return EvalResult(
        job_id=job.job_id,
        matrix=_freeze(labels, _empty_counts(len(labels))),
        accuracy=None,
        wall_time=wall_time,
        status=JobStatus.FAILED,
        message=message,
    )


def _confusion_matrix(job: Job, ds: Dataset, registry: LearnerRegistry) -> ConfusionMatrix:
    factory = registry.resolve(job.classifier_name)
    if not ds.class_attribute.is_nominal:
        raise EvaluationError(f"class attribute '{ds.class_attribute.name}' is not nominal")

    counts = _empty_counts(len(ds.class_labels))
    for fold, (train, test) in enumerate(holdout_partitions(ds, job.test)):
        model = fit(factory, job.assignment, ds, train)
        for row in test:
            actual = ds.class_of(row)
            if actual is None:
                continue
            counts[actual][model.classify(ds, row)] += 1
        LOGGER.debug("Job %s fold %s: %s train, %s test", job.job_id, fold, len(train), len(test))
    return _freeze(ds.class_labels, counts)


def evaluate_job(job: Job, ds: Dataset, registry: LearnerRegistry) -> EvalResult:
    """Run one job to an EvalResult; failures are returned, never raised."""
    started = time.perf_counter()
    try:
        matrix = _confusion_matrix(job, ds, registry)
        score = accuracy(matrix)
    except (LearnerError, EvaluationError) as exc:
        elapsed = time.perf_counter() - started
        LOGGER.warning("Job %s failed: %s", job.job_id, exc)
        return failed_result(job, ds, str(exc), elapsed)
    except Exception as exc:
        elapsed = time.perf_counter() - started
        LOGGER.exception("Job %s crashed", job.job_id)
        return failed_result(job, ds, f"{type(exc).__name__}: {exc}", elapsed)

    return EvalResult(
        job_id=job.job_id,
        matrix=matrix,
        accuracy=score,
        wall_time=time.perf_counter() - started,
        status=JobStatus.COMPLETED,
    )
