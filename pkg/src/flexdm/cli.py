"""Command-line entrypoint: `flexdm run|validate|expand|bench <spec>`.

Exit codes: 0 when everything succeeded, 1 for spec, I/O or usage errors
(nothing runs), 2 when a run finished but some jobs failed. Data goes to
files or standard output; progress and diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence, TextIO

from .arff import ArffError
from .models import EvalResult, Job
from .persistence import JournalError
from .planner import PlanError
from .scheduler import RunAbortedError
from .services import ExperimentLoadError, ExperimentService, LoadedExperiment
from .settings import Settings, load_settings
from .spec_parser import SpecError

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED_JOBS = 2
LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"


class UsageError(ValueError):
    """Raised for command-line usage mistakes (exit code 1, not argparse's 2)."""


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def parse_thread_list(text: str) -> list[int]:
    counts = []
    for item in text.split(","):
        try:
            counts.append(_positive_int(item.strip()))
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"--threads: {exc}") from exc
    if 1 not in counts:
        raise UsageError("--threads must include 1 to measure speedup against")
    return counts


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="flexdm",
        description="Run grids of classifier experiments described by an XML spec.",
    )
    common = _ArgumentParser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="log progress at INFO level")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    run_parser = commands.add_parser(
        "run", parents=[common], help="execute every job in the spec"
    )
    run_parser.add_argument("spec", type=Path)
    run_parser.add_argument("--out", type=Path, default=None, help="output directory")
    run_parser.add_argument("--threads", type=_positive_int, default=None, help="worker count")
    run_parser.add_argument("--resume", action="store_true", help="skip jobs already journaled")
    run_parser.add_argument(
        "--retry-failed", action="store_true", help="with --resume, rerun failed jobs"
    )
    run_parser.add_argument("--force", action="store_true", help="rerun every job")

    validate_parser = commands.add_parser(
        "validate", parents=[common], help="check the spec and count jobs"
    )
    validate_parser.add_argument("spec", type=Path)

    expand_parser = commands.add_parser(
        "expand", parents=[common], help="list job ids and canonical strings"
    )
    expand_parser.add_argument("spec", type=Path)

    bench_parser = commands.add_parser(
        "bench", parents=[common], help="time the plan at several worker counts"
    )
    bench_parser.add_argument("spec", type=Path)
    bench_parser.add_argument(
        "--threads", required=True, help="comma-separated worker counts including 1"
    )
    bench_parser.add_argument("--csv", type=Path, default=None, help="write the table as CSV")
    return parser


class FlexdmCli:
    def __init__(
        self,
        service: ExperimentService,
        stdout: TextIO | None = None,
        stderr: TextIO | None = None,
    ) -> None:
        self._service = service
        self._stdout = stdout or sys.stdout
        self._stderr = stderr or sys.stderr

    def dispatch(self, args: argparse.Namespace) -> int:
        handlers = {
            "run": self.cmd_run,
            "validate": self.cmd_validate,
            "expand": self.cmd_expand,
            "bench": self.cmd_bench,
        }
        try:
            return handlers[args.command](args)
        except ExperimentLoadError as exc:
            for diagnostic in exc.diagnostics:
                self._info(str(diagnostic))
        except SpecError as exc:
            self._error(f"{args.spec}: {exc}")
        except (PlanError, ArffError, JournalError, UsageError) as exc:
            self._error(str(exc))
        except RunAbortedError as exc:
            self._error(f"run aborted after {exc.report.processed} jobs: {exc}")
        except OSError as exc:
            LOGGER.debug("Command %s failed", args.command, exc_info=True)
            self._error(f"I/O error: {exc}")
        return EXIT_ERROR

    def _error(self, message: str) -> None:
        self._stderr.write(f"error: {message}\n")

    def _info(self, message: str) -> None:
        self._stderr.write(f"{message}\n")
        self._stderr.flush()

    def _load(self, spec: Path) -> LoadedExperiment:
        experiment = self._service.load(spec)
        for warning in experiment.warnings:
            self._info(str(warning))
        return experiment

    def cmd_validate(self, args: argparse.Namespace) -> int:
        experiment = self._load(args.spec)
        self._stdout.write(f"plan: {experiment.plan.total_count} jobs\n")
        return EXIT_OK

    def cmd_expand(self, args: argparse.Namespace) -> int:
        experiment = self._load(args.spec)
        for job in experiment.plan.jobs:
            self._stdout.write(f"{job.job_id}\t{job.canonical}\n")
        return EXIT_OK

    def _progress(self, done: int, total: int, job: Job, result: EvalResult) -> None:
        score = "FAILED" if result.accuracy is None else f"{result.accuracy:.4f}"
        self._info(f"[{done}/{total}] {job.job_id} {job.classifier_name} acc={score}")

    def cmd_run(self, args: argparse.Namespace) -> int:
        experiment = self._load(args.spec)
        outcome = self._service.run(
            experiment,
            out_dir=args.out,
            threads=args.threads,
            resume=args.resume,
            retry_failed=args.retry_failed,
            force=args.force,
            on_progress=self._progress,
        )
        report = outcome.report
        self._info(
            f"completed {report.completed}, failed {report.failed}, skipped {report.skipped}"
            f" in {report.total_seconds:.3f}s; summary: {outcome.summary_path}"
        )
        for row in outcome.best:
            self._info(
                f"best for {row.dataset}: {row.classifier} {row.params} acc={row.accuracy:.4f}"
            )
        return EXIT_OK if outcome.all_completed else EXIT_FAILED_JOBS

    def cmd_bench(self, args: argparse.Namespace) -> int:
        worker_counts = parse_thread_list(args.threads)
        experiment = self._load(args.spec)
        report = self._service.bench(experiment, worker_counts, csv_path=args.csv)
        self._stdout.write(report.to_csv())
        return EXIT_OK


def _configure_logging(settings: Settings, verbose: bool) -> None:
    level: Any = logging.INFO if verbose else settings.log_level
    logging.basicConfig(level=level, stream=sys.stderr, format=LOG_FORMAT)


def main(
    argv: Sequence[str] | None = None,
    *,
    stdout: TextIO | None = None,
    stderr: TextIO | None = None,
    service: ExperimentService | None = None,
) -> int:
    """Main entrypoint for the command line."""
    err = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_ERROR

    settings = service.settings if service is not None else load_settings()
    _configure_logging(settings, args.verbose)
    cli = FlexdmCli(service or ExperimentService(settings), stdout=stdout, stderr=err)
    return cli.dispatch(args)


if __name__ == "__main__":
    raise SystemExit(main())
