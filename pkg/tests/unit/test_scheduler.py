import tempfile
import threading
import time
import unittest
from pathlib import Path
from unittest.mock import patch

from flexdm.arff import load_arff
from flexdm.learners import default_registry
from flexdm.models import EvalResult, Job, JobStatus
from flexdm.planner import expand_jobs
from flexdm.scheduler import (
    JobExecutor,
    NullSink,
    RunAbortedError,
    SchedulerConfig,
    bench,
    default_worker_count,
    run,
    theoretical_speedup,
)
from flexdm.services import ExperimentService
from flexdm.spec_parser import parse_spec

from ._support import (
    CountingExecutor,
    fixture,
    sleepy_registry,
    thread_settings,
    write_sleepy_experiment,
)

PLAN_SPEC = """<flexdm>
  <dataset name="zeror_6_4.arff" test="leavexval">
    <classifier name="zeror"/>
    <classifier name="knn"><parameter name="-K" value="[1:1:5]"/></classifier>
  </dataset>
  <dataset name="noisy.arff" test="xval:5">
    <classifier name="j48"><parameter name="-C" value="{0,0.25,1}"/></classifier>
  </dataset>
</flexdm>
"""


def _plan():
    return expand_jobs(parse_spec(PLAN_SPEC))


def _datasets():
    return {name: load_arff(fixture(name)) for name in ("zeror_6_4.arff", "noisy.arff")}


class RecordingSink:
    def __init__(self) -> None:
        self.received: list[tuple[Job, EvalResult]] = []
        self.active = 0
        self.overlap = False
        self._guard = threading.Lock()

    def receive(self, job: Job, result: EvalResult) -> EvalResult:
        with self._guard:
            self.active += 1
            if self.active > 1:
                self.overlap = True
        self.received.append((job, result))
        with self._guard:
            self.active -= 1
        return result


class FailingSink:
    def __init__(self, after: int) -> None:
        self.after = after
        self.count = 0

    def receive(self, job: Job, result: EvalResult) -> EvalResult:
        if self.count >= self.after:
            raise OSError("disk full")
        self.count += 1
        return result


class WorkerCountTests(unittest.TestCase):
    def test_leaves_one_unit_free(self) -> None:
        self.assertEqual(7, default_worker_count(8))
        self.assertEqual(1, default_worker_count(2))
        self.assertEqual(1, default_worker_count(1))

    def test_rejects_zero_units(self) -> None:
        with self.assertRaises(ValueError):
            default_worker_count(0)

    def test_detects_logical_units(self) -> None:
        with patch("flexdm.scheduler.psutil.cpu_count", return_value=12):
            self.assertEqual(11, default_worker_count())
        with patch("flexdm.scheduler.psutil.cpu_count", return_value=None), patch(
            "flexdm.scheduler.os.cpu_count", return_value=None
        ):
            self.assertEqual(1, default_worker_count())

    def test_config_validation(self) -> None:
        with self.assertRaises(ValueError):
            SchedulerConfig(worker_count=0)
        with self.assertRaises(ValueError):
            SchedulerConfig(worker_count=1, executor="gpu")
        with self.assertRaises(ValueError):
            SchedulerConfig(worker_count=1, job_timeout=0)


class RunTests(unittest.TestCase):
    def setUp(self) -> None:
        self.plan = _plan()
        self.executor = CountingExecutor(_datasets(), default_registry())

    def test_every_job_reaches_the_sink_once(self) -> None:
        sink = RecordingSink()

        report = run(self.plan, SchedulerConfig(4, executor="thread"), sink, executor=self.executor)

        self.assertEqual(9, self.plan.total_count)
        self.assertEqual(
            sorted(job.job_id for job in self.plan.jobs),
            sorted(job.job_id for job, _ in sink.received),
        )
        self.assertFalse(sink.overlap)
        self.assertEqual(8, report.completed)
        self.assertEqual(1, report.failed)
        self.assertEqual(0, report.skipped)
        self.assertEqual(9, len(report.durations))
        self.assertGreater(report.total_seconds, 0.0)

    def test_single_worker_runs_in_plan_order(self) -> None:
        sink = RecordingSink()

        run(self.plan, SchedulerConfig(1, executor="thread"), sink, executor=self.executor)

        self.assertEqual(
            [job.job_id for job in self.plan.jobs], [job.job_id for job, _ in sink.received]
        )

    def test_results_do_not_depend_on_worker_count(self) -> None:
        outcomes = []
        for workers in (1, 3, 7):
            sink = RecordingSink()
            run(self.plan, SchedulerConfig(workers, executor="thread"), sink, executor=self.executor)
            outcomes.append(
                {job.job_id: (result.status, result.matrix) for job, result in sink.received}
            )

        self.assertEqual(outcomes[0], outcomes[1])
        self.assertEqual(outcomes[0], outcomes[2])

    def test_resume_set_is_skipped(self) -> None:
        skipped = {job.job_id for job in self.plan.jobs[:4]}
        sink = RecordingSink()

        report = run(
            self.plan, SchedulerConfig(2, executor="thread"), sink, skipped, executor=self.executor
        )

        self.assertEqual(4, report.skipped)
        self.assertEqual(9, report.processed)
        self.assertFalse(skipped & set(self.executor.evaluated))
        self.assertEqual(5, len(self.executor.evaluated))

    def test_failed_job_does_not_stop_the_run(self) -> None:
        sink = RecordingSink()

        with self.assertLogs("flexdm.evaluation", level="WARNING"):
            run(self.plan, SchedulerConfig(2, executor="thread"), sink, executor=self.executor)

        failed = [job for job, result in sink.received if result.status is JobStatus.FAILED]
        self.assertEqual(["-C=0"], [job.params_text for job in failed])

    def test_missing_dataset_fails_its_jobs(self) -> None:
        executor = JobExecutor({}, default_registry())

        result = executor(self.plan.jobs[0])

        self.assertEqual(JobStatus.FAILED, result.status)
        self.assertIn("not loaded", result.message)

    def test_sink_failure_aborts_the_run(self) -> None:
        with self.assertLogs("flexdm.scheduler", level="ERROR"):
            with self.assertRaises(RunAbortedError) as raised:
                run(
                    self.plan,
                    SchedulerConfig(1, executor="thread"),
                    FailingSink(after=3),
                    executor=self.executor,
                )

        self.assertEqual(3, raised.exception.report.completed + raised.exception.report.failed)
        self.assertIsInstance(raised.exception.__cause__, OSError)

    def test_empty_remaining_plan(self) -> None:
        everything = {job.job_id for job in self.plan.jobs}

        report = run(
            self.plan, SchedulerConfig(3, executor="thread"), NullSink(), everything,
            executor=self.executor,
        )

        self.assertEqual(9, report.skipped)
        self.assertEqual([], self.executor.evaluated)

    def test_process_executor_matches_thread_executor(self) -> None:
        executor = JobExecutor(_datasets(), default_registry())
        by_mode = {}
        for mode in ("thread", "process"):
            sink = RecordingSink()
            run(self.plan, SchedulerConfig(2, executor=mode), sink, executor=executor)
            by_mode[mode] = {
                job.job_id: (result.status, result.accuracy, result.matrix)
                for job, result in sink.received
            }

        self.assertEqual(by_mode["thread"], by_mode["process"])


class JobTimeoutTests(unittest.TestCase):
    def test_overrunning_jobs_are_abandoned_and_their_worker_replaced(self) -> None:
        registry = sleepy_registry(60.0)
        with tempfile.TemporaryDirectory() as temp_dir:
            spec_path = write_sleepy_experiment(Path(temp_dir), jobs=2)
            experiment = ExperimentService(thread_settings(), registry).load(spec_path)
        sink = RecordingSink()
        cfg = SchedulerConfig(1, executor="process", job_timeout=1.0)

        started = time.perf_counter()
        with self.assertLogs("flexdm.scheduler", level="WARNING") as logs:
            report = run(
                experiment.plan, cfg, sink, executor=JobExecutor(experiment.datasets, registry)
            )
        elapsed = time.perf_counter() - started

        self.assertLess(elapsed, 30.0)
        self.assertEqual(2, report.failed)
        self.assertEqual(
            ["timed out after 1.0s"] * 2, [result.message for _, result in sink.received]
        )
        self.assertEqual(2, sum("exceeded" in line for line in logs.output))

    def test_jobs_within_the_timeout_complete(self) -> None:
        executor = JobExecutor(_datasets(), default_registry())
        sink = RecordingSink()

        report = run(
            _plan(), SchedulerConfig(2, executor="process", job_timeout=120.0), sink,
            executor=executor,
        )

        self.assertEqual(8, report.completed)
        self.assertEqual(1, report.failed)
        self.assertFalse(
            any("timed out" in (result.message or "") for _, result in sink.received)
        )


class SpeedupTests(unittest.TestCase):
    def test_theoretical_speedup(self) -> None:
        self.assertEqual(1.0, theoretical_speedup(20, 1))
        self.assertEqual(4.0, theoretical_speedup(20, 4))
        self.assertAlmostEqual(20 / 3, theoretical_speedup(20, 7))
        self.assertEqual(3.0, theoretical_speedup(3, 8))
        with self.assertRaises(ValueError):
            theoretical_speedup(0, 2)

    def test_bench_report(self) -> None:
        plan = _plan()
        executor = JobExecutor(_datasets(), default_registry())

        report = bench(plan, [1, 2, 2, 3], executor=executor, executor_mode="thread")

        self.assertEqual([1, 2, 3], [row.workers for row in report.rows])
        self.assertEqual(1.0, report.rows[0].speedup)
        self.assertEqual(3.0, report.rows[2].theoretical)
        lines = report.to_csv().splitlines()
        self.assertEqual("workers,total_seconds,speedup,theoretical", lines[0])
        self.assertTrue(lines[1].startswith("1,"))
        self.assertTrue(lines[1].endswith(",1.000,1.000"))

    def test_bench_requires_a_single_worker_baseline(self) -> None:
        executor = JobExecutor(_datasets(), default_registry())

        with self.assertRaises(ValueError):
            bench(_plan(), [2, 4], executor=executor, executor_mode="thread")
        with self.assertRaises(ValueError):
            bench(_plan(), [], executor=executor, executor_mode="thread")


if __name__ == "__main__":
    unittest.main()
