"""Concurrent execution of a job plan.

A fixed pool of `worker_count` dispatcher threads pulls jobs from one FIFO
queue. With the `process` executor each dispatcher hands its job to its own
spawned worker process, so evaluation runs on separate cores; with the
`thread` executor the dispatcher evaluates in-process. Every finished result
goes to the sink under a single lock before that dispatcher takes its next
job, which is what makes saving incremental.
"""

from __future__ import annotations

import logging
import math
import multiprocessing
import os
import queue
import threading
import time
from concurrent.futures import Future, ProcessPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeoutError
from concurrent.futures.process import BrokenProcessPool
from dataclasses import dataclass
from typing import Collection, Iterable, Mapping, Protocol

import psutil

from .evaluation import evaluate_job, failed_result
from .learners import LearnerRegistry
from .models import BenchReport, BenchRow, Dataset, EvalResult, Job, JobPlan, JobStatus, RunReport
from .settings import DEFAULT_JOB_CAP, EXECUTORS

LOGGER = logging.getLogger(__name__)


class RunAbortedError(RuntimeError):
    """The sink failed; in-flight jobs were drained and the run stopped."""

    def __init__(self, message: str, report: RunReport) -> None:
        super().__init__(message)
        self.report = report


class ResultSink(Protocol):
    def receive(self, job: Job, result: EvalResult) -> EvalResult:
        """Persist `result`; returns the result as recorded."""
        ...


class NullSink:
    def receive(self, job: Job, result: EvalResult) -> EvalResult:
        return result


@dataclass(frozen=True)
class SchedulerConfig:
    worker_count: int
    job_cap: int = DEFAULT_JOB_CAP
    executor: str = "process"
    # Enforced by the process executor only: a timed-out job's worker process is
    # terminated and replaced. Thread-executor jobs always run to completion.
    job_timeout: float | None = None

    def __post_init__(self) -> None:
        if self.worker_count < 1:
            raise ValueError("worker_count must be at least 1")
        if self.executor not in EXECUTORS:
            raise ValueError(f"executor must be one of {', '.join(EXECUTORS)}")
        if self.job_timeout is not None and self.job_timeout <= 0:
            raise ValueError("job_timeout must be positive")


def detect_logical_units() -> int:
    return psutil.cpu_count(logical=True) or os.cpu_count() or 1


def detect_physical_units() -> int:
    return psutil.cpu_count(logical=False) or detect_logical_units()


def default_worker_count(n_logical: int | None = None) -> int:
    """One worker per logical unit, leaving one unit free."""
    units = detect_logical_units() if n_logical is None else n_logical
    if units < 1:
        raise ValueError("logical unit count must be at least 1")
    return max(1, units - 1)


class JobExecutor:
    """Evaluates jobs against preloaded datasets; picklable for worker processes."""

    def __init__(self, datasets: Mapping[str, Dataset], registry: LearnerRegistry) -> None:
        self.datasets = dict(datasets)
        self.registry = registry

    def __call__(self, job: Job) -> EvalResult:
        ds = self.datasets.get(job.dataset_name)
        if ds is None:
            return failed_result(job, None, f"dataset {job.dataset_name} is not loaded", 0.0)
        return evaluate_job(job, ds, self.registry)


_PROCESS_EXECUTOR: JobExecutor | None = None


def _install_executor(executor: JobExecutor) -> None:
    global _PROCESS_EXECUTOR
    _PROCESS_EXECUTOR = executor


def _run_in_process(job: Job) -> EvalResult:
    if _PROCESS_EXECUTOR is None:
        raise RuntimeError("worker process has no job executor installed")
    return _PROCESS_EXECUTOR(job)


def _worker_ready() -> bool:
    return _PROCESS_EXECUTOR is not None


class _WorkerProcess:
    """One dispatcher's worker process, started on first use.

    A job that overruns its timeout cannot be cancelled inside the executor, so
    the whole process is terminated and the next job starts a fresh one.
    """

    def __init__(self, executor: JobExecutor) -> None:
        self._executor = executor
        self._pool: ProcessPoolExecutor | None = None

    def submit(self, job: Job) -> Future[EvalResult]:
        if self._pool is None:
            self._pool = ProcessPoolExecutor(
                max_workers=1,
                mp_context=multiprocessing.get_context("spawn"),
                initializer=_install_executor,
                initargs=(self._executor,),
            )
            # Startup and dataset transfer do not count against the job timeout.
            self._pool.submit(_worker_ready).result()
        return self._pool.submit(_run_in_process, job)

    def kill(self) -> None:
        pool, self._pool = self._pool, None
        if pool is None:
            return
        terminate = getattr(pool, "terminate_workers", None)
        if terminate is not None:
            terminate()
            return
        # Python < 3.14 has no public way to stop a busy worker.
        processes = list((pool._processes or {}).values())
        for process in processes:
            process.terminate()
        for process in processes:
            process.join(timeout=5)
        pool.shutdown(wait=False, cancel_futures=True)

    def close(self) -> None:
        pool, self._pool = self._pool, None
        if pool is not None:
            pool.shutdown(wait=True, cancel_futures=True)


def _tally(report: RunReport, job: Job, result: EvalResult) -> None:
    report.durations[job.job_id] = result.wall_time
    if result.status is JobStatus.COMPLETED:
        report.completed += 1
    else:
        report.failed += 1


class _Run:
    def __init__(
        self,
        jobs: Iterable[Job],
        cfg: SchedulerConfig,
        sink: ResultSink,
        executor: JobExecutor,
        report: RunReport,
    ) -> None:
        self.pending: queue.Queue[Job] = queue.Queue()
        for job in jobs:
            self.pending.put(job)
        self.cfg = cfg
        self.sink = sink
        self.executor = executor
        self.report = report
        self.lock = threading.Lock()
        self.aborted = threading.Event()
        self.failure: BaseException | None = None

    def _execute(self, job: Job, worker: _WorkerProcess | None) -> EvalResult:
        if worker is None:
            return self.executor(job)

        try:
            future = worker.submit(job)
            return future.result(timeout=self.cfg.job_timeout)
        except FutureTimeoutError:
            worker.kill()
            LOGGER.warning("Job %s exceeded %ss", job.job_id, self.cfg.job_timeout)
            return failed_result(
                job, None, f"timed out after {self.cfg.job_timeout}s", self.cfg.job_timeout or 0.0
            )
        except BrokenProcessPool as exc:
            worker.kill()
            LOGGER.error("Worker process died on job %s: %s", job.job_id, exc)
            return failed_result(job, None, f"worker process died: {exc}", 0.0)
        except Exception as exc:
            LOGGER.exception("Worker process failed on job %s", job.job_id)
            return failed_result(job, None, f"worker error: {exc}", 0.0)

    def _work(self) -> None:
        worker = _WorkerProcess(self.executor) if self.cfg.executor == "process" else None
        try:
            self._drain(worker)
        finally:
            if worker is not None:
                worker.close()

    def _drain(self, worker: _WorkerProcess | None) -> None:
        while not self.aborted.is_set():
            try:
                job = self.pending.get_nowait()
            except queue.Empty:
                return
            result = self._execute(job, worker)
            with self.lock:
                if self.aborted.is_set():
                    LOGGER.info("Dropping result of %s after abort", job.job_id)
                    return
                try:
                    recorded = self.sink.receive(job, result)
                except Exception as exc:
                    LOGGER.error("Result sink failed on %s: %s", job.job_id, exc)
                    self.failure = exc
                    self.aborted.set()
                    return
                _tally(self.report, job, recorded)

    def execute(self) -> None:
        workers = min(self.cfg.worker_count, self.pending.qsize())
        if workers == 0:
            return
        threads = [
            threading.Thread(target=self._work, name=f"flexdm-worker-{slot}", daemon=True)
            for slot in range(workers)
        ]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()


def run(
    plan: JobPlan,
    cfg: SchedulerConfig,
    sink: ResultSink,
    resume_set: Collection[str] = frozenset(),
    *,
    executor: JobExecutor,
) -> RunReport:
    started = time.perf_counter()
    report = RunReport()
    remaining: list[Job] = []
    for job in plan.jobs:
        if job.job_id in resume_set:
            report.skipped += 1
        else:
            remaining.append(job)

    LOGGER.info(
        "Running %s jobs on %s workers (%s skipped)",
        len(remaining),
        min(cfg.worker_count, len(remaining)),
        report.skipped,
    )
    state = _Run(remaining, cfg, sink, executor, report)
    state.execute()
    report.total_seconds = time.perf_counter() - started

    if state.failure is not None:
        raise RunAbortedError(f"result sink failed: {state.failure}", report) from state.failure
    LOGGER.info(
        "Run finished in %.3fs: %s completed, %s failed, %s skipped",
        report.total_seconds,
        report.completed,
        report.failed,
        report.skipped,
    )
    return report


def theoretical_speedup(jobs: int, workers: int) -> float:
    """Best list-scheduling speedup for `jobs` equal jobs on `workers` workers."""
    if jobs < 1 or workers < 1:
        raise ValueError("jobs and workers must be at least 1")
    return min(float(workers), jobs / math.ceil(jobs / workers))


def bench(
    plan: JobPlan,
    worker_counts: Iterable[int],
    sink: ResultSink | None = None,
    *,
    executor: JobExecutor,
    executor_mode: str = "process",
    job_timeout: float | None = None,
) -> BenchReport:
    counts = list(dict.fromkeys(worker_counts))
    if not counts:
        raise ValueError("worker counts must not be empty")
    if 1 not in counts:
        raise ValueError("worker counts must include 1")
    if any(count < 1 for count in counts):
        raise ValueError("worker counts must be at least 1")

    target = sink if sink is not None else NullSink()
    timings: dict[int, float] = {}
    for workers in counts:
        cfg = SchedulerConfig(
            worker_count=workers, executor=executor_mode, job_timeout=job_timeout
        )
        timings[workers] = run(plan, cfg, target, executor=executor).total_seconds
        LOGGER.info("Bench with %s workers: %.3fs", workers, timings[workers])

    baseline = timings[1]
    rows = []
    for workers in counts:
        seconds = timings[workers]
        rows.append(
            BenchRow(
                workers=workers,
                total_seconds=seconds,
                speedup=baseline / seconds if seconds > 0 else 1.0,
                theoretical=theoretical_speedup(plan.total_count, workers)
                if plan.total_count
                else 1.0,
            )
        )
    return BenchReport(rows=tuple(rows))
