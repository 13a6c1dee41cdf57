"""Job identity, per-job result files, the run journal and the summary file.

An output directory holds:

- `<job_id>.result`: one UTF-8 text file per finished job, written atomically
  (temp file, fsync, rename).
- `journal.tsv`: append-only, one `<job_id>\\t<STATUS>\\t<seconds>` line per
  finished job, fsync'd per line. It defines the resume set after a crash.
- `summary.csv`: accuracy per job, sorted by canonical job string.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import re
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path
from typing import BinaryIO, Callable, Iterable

from .models import EvalResult, Job, JobStatus, JournalEntry, SummaryRow

LOGGER = logging.getLogger(__name__)

JOURNAL_NAME = "journal.tsv"
SUMMARY_NAME = "summary.csv"
RESULT_SUFFIX = ".result"
SUMMARY_HEADER = ("dataset", "classifier", "params", "accuracy", "status")
MATRIX_CORNER = "actual\\predicted"

_FNV_OFFSET_BASIS = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK_64 = 0xFFFFFFFFFFFFFFFF
_JOB_ID_PATTERN = re.compile(r"^[0-9a-f]{16}$")


class JournalError(RuntimeError):
    """Raised when the journal body is corrupt (not just a torn last line)."""


def job_id(canonical: str) -> str:
    """FNV-1a 64-bit hash of the UTF-8 canonical job string, as 16 hex digits."""
    if not canonical:
        raise ValueError("canonical job string must be non-empty")
    value = _FNV_OFFSET_BASIS
    for byte in canonical.encode("utf-8"):
        value ^= byte
        value = (value * _FNV_PRIME) & _MASK_64
    return f"{value:016x}"


def result_path(out_dir: Path, job_id_text: str) -> Path:
    return Path(out_dir) / f"{job_id_text}{RESULT_SUFFIX}"


def _atomic_write_text(path: Path, text: str) -> None:
    handle = tempfile.NamedTemporaryFile(
        "w",
        encoding="utf-8",
        newline="\n",
        dir=path.parent,
        prefix=f".{path.name}.",
        suffix=".tmp",
        delete=False,
    )
    temp_path = Path(handle.name)
    try:
        with handle:
            handle.write(text)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(temp_path, path)
    except BaseException:
        temp_path.unlink(missing_ok=True)
        raise


# Result files


def _format_matrix(result: EvalResult) -> list[str]:
    labels = result.matrix.labels
    counts = result.matrix.counts
    first_width = max([len(MATRIX_CORNER), *(len(label) for label in labels)])
    widths = [
        max([len(label), *(len(str(row[column])) for row in counts)])
        for column, label in enumerate(labels)
    ]

    header = [MATRIX_CORNER.ljust(first_width)]
    header.extend(label.rjust(width) for label, width in zip(labels, widths))
    lines = ["confusion matrix:", "  ".join(header).rstrip()]
    for label, row in zip(labels, counts):
        cells = [label.ljust(first_width)]
        cells.extend(str(count).rjust(width) for count, width in zip(row, widths))
        lines.append("  ".join(cells).rstrip())
    return lines


def format_result(job: Job, result: EvalResult) -> str:
    lines = [
        f"job: {job.job_id}",
        f"dataset: {job.dataset_name}",
        f"classifier: {job.classifier_name}",
        f"params: {job.params_text}",
        f"test: {job.test_token}",
    ]
    if result.completed and result.accuracy is not None:
        lines.append(f"accuracy: {result.accuracy:.4f}")
        if job.results.include_matrix:
            lines.extend(_format_matrix(result))
    else:
        lines.append(f"status: {JobStatus.FAILED.value}")
        lines.append(f"error: {result.message or 'unknown error'}")
    return "\n".join(lines) + "\n"


def write_result(out_dir: Path, job: Job, result: EvalResult) -> Path:
    path = result_path(out_dir, job.job_id)
    _atomic_write_text(path, format_result(job, result))
    return path


@dataclass(frozen=True)
class StoredResult:
    job_id: str
    status: JobStatus
    accuracy: float | None
    message: str | None = None


def read_result(path: Path) -> StoredResult:
    """Recover the header fields of a result file written by `write_result`."""
    fields: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("confusion matrix:"):
            break
        key, separator, value = line.partition(": ")
        if separator:
            fields[key] = value

    identifier = fields.get("job")
    if identifier is None:
        raise ValueError(f"result file {path} has no job line")

    if "accuracy" in fields:
        try:
            accuracy = float(fields["accuracy"])
        except ValueError as exc:
            raise ValueError(f"result file {path} has an unreadable accuracy") from exc
        return StoredResult(job_id=identifier, status=JobStatus.COMPLETED, accuracy=accuracy)

    return StoredResult(
        job_id=identifier,
        status=JobStatus.FAILED,
        accuracy=None,
        message=fields.get("error"),
    )


# Journal


class RunJournal:
    def __init__(self, path: Path) -> None:
        self.path = Path(path)

    def append(self, entry: JournalEntry) -> None:
        line = f"{entry.job_id}\t{entry.status.value}\t{entry.wall_time:.3f}\n"
        with self.path.open("a+b") as handle:
            self._drop_torn_tail(handle)
            handle.write(line.encode("utf-8"))
            handle.flush()
            os.fsync(handle.fileno())

    def _drop_torn_tail(self, handle: BinaryIO) -> None:
        """Cut a partial last line left by a crash so the next entry starts on its own line."""
        size = handle.seek(0, os.SEEK_END)
        if size == 0:
            return
        handle.seek(size - 1)
        if handle.read(1) == b"\n":
            return
        handle.seek(0)
        data = handle.read()
        keep = data.rfind(b"\n") + 1
        LOGGER.warning(
            "Dropping torn last line of journal %s: %r",
            self.path,
            data[keep:].decode("utf-8", errors="replace"),
        )
        handle.truncate(keep)

    def load(self) -> list[JournalEntry]:
        if not self.path.is_file():
            return []

        text = self.path.read_text(encoding="utf-8")
        if not text:
            return []

        lines = text.split("\n")
        torn_tail = lines.pop()
        if torn_tail:
            LOGGER.warning(
                "Ignoring torn last line of journal %s: %r", self.path, torn_tail
            )

        entries: list[JournalEntry] = []
        for number, line in enumerate(lines, start=1):
            entry = _parse_journal_line(line)
            if entry is not None:
                entries.append(entry)
                continue
            if number == len(lines) and not torn_tail:
                LOGGER.warning(
                    "Ignoring corrupt last line %s of journal %s: %r", number, self.path, line
                )
                continue
            raise JournalError(f"corrupt journal line {number} in {self.path}: {line!r}")
        return entries


def _parse_journal_line(line: str) -> JournalEntry | None:
    parts = line.split("\t")
    if len(parts) != 3:
        return None
    identifier, raw_status, raw_seconds = parts
    if not _JOB_ID_PATTERN.match(identifier):
        return None
    try:
        status = JobStatus(raw_status)
        wall_time = float(raw_seconds)
    except ValueError:
        return None
    return JournalEntry(job_id=identifier, status=status, wall_time=wall_time)


def load_journal_state(out_dir: Path) -> dict[str, JournalEntry]:
    """Last journal entry per job id; later lines win."""
    state: dict[str, JournalEntry] = {}
    for entry in RunJournal(Path(out_dir) / JOURNAL_NAME).load():
        state[entry.job_id] = entry
    return state


def load_completed(out_dir: Path) -> set[str]:
    completed: set[str] = set()
    for identifier, entry in load_journal_state(out_dir).items():
        if entry.status is not JobStatus.COMPLETED:
            continue
        if not result_path(out_dir, identifier).is_file():
            LOGGER.warning(
                "Journal marks %s completed but its result file is missing; it will run again",
                identifier,
            )
            continue
        completed.add(identifier)
    return completed


def load_failed(out_dir: Path) -> set[str]:
    return {
        identifier
        for identifier, entry in load_journal_state(out_dir).items()
        if entry.status is JobStatus.FAILED
    }


# Sink


ResultCallback = Callable[[Job, EvalResult], None]


class RunDirectory:
    """Persistence sink: result file first, then the journal line.

    The scheduler calls `receive` from its serialized section, so journal
    appends never interleave.
    """

    def __init__(self, out_dir: Path, *, on_result: ResultCallback | None = None) -> None:
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.journal = RunJournal(self.out_dir / JOURNAL_NAME)
        self.results: dict[str, EvalResult] = {}
        self._on_result = on_result

    def receive(self, job: Job, result: EvalResult) -> EvalResult:
        try:
            write_result(self.out_dir, job, result)
        except OSError as exc:
            LOGGER.warning("Could not write result file for %s: %s", job.job_id, exc)
            result = replace(
                result,
                status=JobStatus.FAILED,
                accuracy=None,
                message=f"write error: {exc}",
            )

        self.journal.append(
            JournalEntry(job_id=job.job_id, status=result.status, wall_time=result.wall_time)
        )
        self.results[job.job_id] = result
        if self._on_result is not None:
            self._on_result(job, result)
        return result


# Summary


def summary_row(job: Job, status: JobStatus, accuracy: float | None) -> SummaryRow:
    return SummaryRow(
        canonical=job.canonical,
        dataset=job.dataset_name,
        classifier=job.classifier_name,
        params=job.params_text,
        accuracy=accuracy if status is JobStatus.COMPLETED else None,
        status=status,
    )


def write_summary(out_dir: Path, rows: Iterable[SummaryRow]) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for row in sorted(rows, key=lambda item: item.canonical):
        accuracy = "" if row.accuracy is None else f"{row.accuracy:.4f}"
        writer.writerow([row.dataset, row.classifier, row.params, accuracy, row.status.value])

    path = Path(out_dir) / SUMMARY_NAME
    _atomic_write_text(path, buffer.getvalue())
    return path


def best_rows(rows: Iterable[SummaryRow]) -> list[SummaryRow]:
    """Best completed configuration per dataset; ties keep canonical order."""
    best: dict[str, SummaryRow] = {}
    for row in sorted(rows, key=lambda item: item.canonical):
        if row.status is not JobStatus.COMPLETED or row.accuracy is None:
            continue
        current = best.get(row.dataset)
        if current is None or row.accuracy > (current.accuracy or 0.0):
            best[row.dataset] = row
    return list(best.values())
