"""Shared data models used across the pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum


# Experiment specification


@dataclass(frozen=True)
class ScalarValue:
    text: str


@dataclass(frozen=True)
class RangeValue:
    start: Decimal
    step: Decimal
    end: Decimal


@dataclass(frozen=True)
class ListValue:
    items: tuple[str, ...]


ValueSpec = ScalarValue | RangeValue | ListValue


@dataclass(frozen=True)
class TestStrategy:
    """How a dataset is split for evaluation.

    `kind` is one of "leavexval", "xval" or "split". `k` is set for k-fold
    cross-validation and `train_fraction` for percentage splits.
    """

    __test__ = False

    kind: str
    k: int | None = None
    train_fraction: Decimal | None = None
    seed: int = 1

    @classmethod
    def leave_one_out(cls) -> TestStrategy:
        return cls(kind="leavexval")

    @classmethod
    def k_fold(cls, k: int = 10, seed: int = 1) -> TestStrategy:
        return cls(kind="xval", k=k, seed=seed)

    @classmethod
    def percentage_split(cls, train_fraction: Decimal, seed: int = 1) -> TestStrategy:
        return cls(kind="split", train_fraction=train_fraction, seed=seed)


@dataclass(frozen=True)
class ResultOptions:
    include_matrix: bool = False


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    value: ValueSpec
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class ClassifierSpec:
    name: str
    parameters: tuple[ParameterSpec, ...] = ()
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    test: TestStrategy = TestStrategy.k_fold()
    results: ResultOptions = ResultOptions()
    classifiers: tuple[ClassifierSpec, ...] = ()
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class ExperimentSpec:
    datasets: tuple[DatasetSpec, ...]


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    location: str
    message: str

    @property
    def is_error(self) -> bool:
        return self.severity == "error"

    def __str__(self) -> str:
        return f"{self.severity}: {self.location}: {self.message}"


# Datasets

# Numeric attributes hold floats, nominal attributes hold label indices,
# None is a missing value.
Value = float | int | None


@dataclass(frozen=True)
class Attribute:
    name: str
    # None for numeric attributes.
    labels: tuple[str, ...] | None = None

    @property
    def is_nominal(self) -> bool:
        return self.labels is not None


@dataclass(frozen=True)
class Dataset:
    relation: str
    attributes: tuple[Attribute, ...]
    rows: tuple[tuple[Value, ...], ...]
    class_index: int

    @property
    def num_instances(self) -> int:
        return len(self.rows)

    @property
    def class_attribute(self) -> Attribute:
        return self.attributes[self.class_index]

    @property
    def class_labels(self) -> tuple[str, ...]:
        return self.class_attribute.labels or ()

    def class_of(self, row: int) -> int | None:
        value = self.rows[row][self.class_index]
        return None if value is None else int(value)


# Jobs

ParameterAssignment = tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class Job:
    dataset_name: str
    test: TestStrategy
    results: ResultOptions
    classifier_name: str
    assignment: ParameterAssignment
    test_token: str
    canonical: str
    job_id: str

    @property
    def params_text(self) -> str:
        return ";".join(f"{flag}={value}" for flag, value in self.assignment)


@dataclass(frozen=True)
class JobPlan:
    jobs: tuple[Job, ...]

    @property
    def total_count(self) -> int:
        return len(self.jobs)


# Results


class JobStatus(str, Enum):
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"


@dataclass(frozen=True)
class ConfusionMatrix:
    labels: tuple[str, ...]
    # counts[actual][predicted]
    counts: tuple[tuple[int, ...], ...]

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    @property
    def trace(self) -> int:
        return sum(self.counts[i][i] for i in range(len(self.labels)))


@dataclass(frozen=True)
class EvalResult:
    job_id: str
    matrix: ConfusionMatrix
    accuracy: float | None
    wall_time: float
    status: JobStatus
    message: str | None = None

    @property
    def completed(self) -> bool:
        return self.status is JobStatus.COMPLETED


@dataclass(frozen=True)
class JournalEntry:
    job_id: str
    status: JobStatus
    wall_time: float


@dataclass(frozen=True)
class SummaryRow:
    canonical: str
    dataset: str
    classifier: str
    params: str
    accuracy: float | None
    status: JobStatus


@dataclass
class RunReport:
    completed: int = 0
    failed: int = 0
    skipped: int = 0
    total_seconds: float = 0.0
    durations: dict[str, float] = field(default_factory=dict)

    @property
    def processed(self) -> int:
        return self.completed + self.failed + self.skipped


@dataclass(frozen=True)
class BenchRow:
    workers: int
    total_seconds: float
    speedup: float
    theoretical: float


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[BenchRow, ...]

    def to_csv(self) -> str:
        lines = ["workers,total_seconds,speedup,theoretical"]
        for row in self.rows:
            lines.append(
                f"{row.workers},{row.total_seconds:.3f},{row.speedup:.3f},{row.theoretical:.3f}"
            )
        return "\n".join(lines) + "\n"
