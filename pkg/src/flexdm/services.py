"""Application-level use cases."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from .learners import LearnerRegistry, default_registry
from .models import (
    BenchReport,
    Dataset,
    Diagnostic,
    EvalResult,
    ExperimentSpec,
    Job,
    JobPlan,
    JobStatus,
    RunReport,
    SummaryRow,
)
from .persistence import (
    RunDirectory,
    best_rows,
    load_completed,
    load_failed,
    read_result,
    result_path,
    summary_row,
    write_summary,
)
from .planner import check_job_cap, expand_jobs
from .scheduler import JobExecutor, SchedulerConfig, bench, default_worker_count, run
from .settings import Settings, load_settings
from .spec_parser import load_spec, validate_spec

LOGGER = logging.getLogger(__name__)

ProgressCallback = Callable[[int, int, Job, EvalResult], None]


class ExperimentLoadError(ValueError):
    """The spec parsed but failed validation; carries every error diagnostic."""

    def __init__(self, diagnostics: Iterable[Diagnostic]) -> None:
        self.diagnostics = tuple(diagnostics)
        super().__init__("; ".join(str(diagnostic) for diagnostic in self.diagnostics))


@dataclass(frozen=True)
class LoadedExperiment:
    spec_path: Path
    spec: ExperimentSpec
    plan: JobPlan
    datasets: dict[str, Dataset]
    warnings: tuple[Diagnostic, ...] = ()


@dataclass(frozen=True)
class RunOutcome:
    report: RunReport
    summary_path: Path
    rows: tuple[SummaryRow, ...]
    best: tuple[SummaryRow, ...]

    @property
    def all_completed(self) -> bool:
        return all(row.status is JobStatus.COMPLETED for row in self.rows)


class ExperimentService:
    def __init__(
        self,
        settings: Settings | None = None,
        registry: LearnerRegistry | None = None,
    ) -> None:
        self._settings = settings or load_settings()
        self._registry = registry or default_registry()

    @property
    def settings(self) -> Settings:
        return self._settings

    @property
    def registry(self) -> LearnerRegistry:
        return self._registry

    def load(self, spec_path: Path) -> LoadedExperiment:
        """Parse, validate and expand a spec; raises before anything runs."""
        path = Path(spec_path)
        spec = load_spec(path)
        check_job_cap(spec, self._settings.job_cap)
        datasets: dict[str, Dataset] = {}
        diagnostics = validate_spec(
            spec, self._registry, base_dir=path.parent, loaded=datasets
        )
        errors = [diagnostic for diagnostic in diagnostics if diagnostic.is_error]
        if errors:
            raise ExperimentLoadError(errors)

        plan = expand_jobs(spec, job_cap=self._settings.job_cap)
        warnings = tuple(diagnostic for diagnostic in diagnostics if not diagnostic.is_error)
        return LoadedExperiment(
            spec_path=path, spec=spec, plan=plan, datasets=datasets, warnings=warnings
        )

    def worker_count(self, threads: int | None = None) -> int:
        if threads is not None:
            return threads
        if self._settings.threads is not None:
            return self._settings.threads
        return default_worker_count()

    def executor(self, experiment: LoadedExperiment) -> JobExecutor:
        return JobExecutor(experiment.datasets, self._registry)

    def resume_set(self, out_dir: Path, *, retry_failed: bool = False) -> set[str]:
        """Job ids a resumed run skips: completed ones, plus failed ones unless retried."""
        skipped = load_completed(out_dir)
        if not retry_failed:
            for identifier in load_failed(out_dir):
                if result_path(out_dir, identifier).is_file():
                    skipped.add(identifier)
        return skipped

    def run(
        self,
        experiment: LoadedExperiment,
        *,
        out_dir: Path | None = None,
        threads: int | None = None,
        resume: bool = False,
        retry_failed: bool = False,
        force: bool = False,
        on_progress: ProgressCallback | None = None,
    ) -> RunOutcome:
        target = Path(out_dir) if out_dir is not None else self._settings.out_dir
        target.mkdir(parents=True, exist_ok=True)

        skipped: set[str] = set()
        if resume and not force:
            planned = {job.job_id for job in experiment.plan.jobs}
            skipped = self.resume_set(target, retry_failed=retry_failed) & planned
            LOGGER.info(
                "Resuming in %s: %s of %s jobs already done", target, len(skipped), len(planned)
            )

        total = experiment.plan.total_count
        done = len(skipped)

        def progress(job: Job, result: EvalResult) -> None:
            nonlocal done
            done += 1
            if on_progress is not None:
                on_progress(done, total, job, result)

        sink = RunDirectory(target, on_result=progress)
        cfg = SchedulerConfig(
            worker_count=self.worker_count(threads),
            job_cap=self._settings.job_cap,
            executor=self._settings.executor,
        )
        report = run(experiment.plan, cfg, sink, skipped, executor=self.executor(experiment))

        rows = tuple(self._summary_rows(experiment.plan, target, sink.results, skipped))
        summary_path = write_summary(target, rows)
        best = tuple(best_rows(rows))
        for row in best:
            LOGGER.info(
                "Best for %s: %s %s (accuracy %.4f)",
                row.dataset,
                row.classifier,
                row.params or "(defaults)",
                row.accuracy,
            )
        return RunOutcome(report=report, summary_path=summary_path, rows=rows, best=best)

    def _summary_rows(
        self,
        plan: JobPlan,
        out_dir: Path,
        results: dict[str, EvalResult],
        skipped: set[str],
    ) -> Iterable[SummaryRow]:
        for job in plan.jobs:
            result = results.get(job.job_id)
            if result is not None:
                yield summary_row(job, result.status, result.accuracy)
                continue
            if job.job_id not in skipped:
                # Unfinished jobs have no row.
                continue
            try:
                stored = read_result(result_path(out_dir, job.job_id))
            except (OSError, ValueError) as exc:
                LOGGER.warning("Cannot read stored result for %s: %s", job.job_id, exc)
                yield summary_row(job, JobStatus.FAILED, None)
                continue
            yield summary_row(job, stored.status, stored.accuracy)

    def bench(
        self,
        experiment: LoadedExperiment,
        worker_counts: Iterable[int],
        *,
        csv_path: Path | None = None,
    ) -> BenchReport:
        report = bench(
            experiment.plan,
            worker_counts,
            executor=self.executor(experiment),
            executor_mode=self._settings.executor,
            job_timeout=self._settings.job_timeout,
        )
        if csv_path is not None:
            Path(csv_path).write_text(report.to_csv(), encoding="utf-8")
        return report
