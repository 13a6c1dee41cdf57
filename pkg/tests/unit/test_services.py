import tempfile
import threading
import time
import unittest
from pathlib import Path
from unittest.mock import patch

import psutil

from flexdm.models import JobStatus
from flexdm.persistence import JOURNAL_NAME, RESULT_SUFFIX, SUMMARY_NAME, RunJournal
from flexdm.planner import PlanError
from flexdm.scheduler import RunAbortedError
from flexdm.services import ExperimentLoadError, ExperimentService

from ._support import (
    SAMPLES,
    CountingExecutor,
    CrashAfter,
    sleepy_registry,
    thread_settings,
    write_bench_experiment,
    write_health_experiment,
    write_sleepy_experiment,
)


def _result_files(out_dir: Path) -> dict[str, str]:
    return {
        path.name: path.read_text(encoding="utf-8")
        for path in sorted(out_dir.glob(f"*{RESULT_SUFFIX}"))
    }


def _counting(service: ExperimentService, experiment) -> CountingExecutor:
    return CountingExecutor(experiment.datasets, service.registry)


class LoadTests(unittest.TestCase):
    def test_sample_experiment_loads(self) -> None:
        service = ExperimentService(thread_settings())

        experiment = service.load(SAMPLES / "health.xml")

        self.assertEqual(20, experiment.plan.total_count)
        self.assertEqual(["health.arff"], list(experiment.datasets))
        self.assertEqual((), experiment.warnings)

    def test_validation_errors_stop_loading(self) -> None:
        with tempfile.TemporaryDirectory() as temp_dir:
            spec_path = Path(temp_dir) / "spec.xml"
            spec_path.write_text(
                '<flexdm><dataset name="gone.arff"><classifier name="tree"/></dataset></flexdm>',
                encoding="utf-8",
            )

            with self.assertRaises(ExperimentLoadError) as raised:
                ExperimentService(thread_settings()).load(spec_path)

        messages = [diagnostic.message for diagnostic in raised.exception.diagnostics]
        self.assertEqual(2, len(messages))
        self.assertIn("dataset file not found", messages[0])
        self.assertEqual("unknown classifier 'tree'", messages[1])

    def test_job_cap_applies_at_load(self) -> None:
        with tempfile.TemporaryDirectory() as temp_dir:
            spec_path = write_health_experiment(Path(temp_dir))

            with self.assertRaises(ValueError):
                ExperimentService(thread_settings(job_cap=19)).load(spec_path)

    def test_oversized_range_is_rejected_before_validation(self) -> None:
        with tempfile.TemporaryDirectory() as temp_dir:
            spec_path = write_health_experiment(Path(temp_dir))
            spec_path.write_text(
                '<flexdm><dataset name="health.arff"><classifier name="j48">'
                '<parameter name="-M" value="[1:1:20000000]"/></classifier></dataset></flexdm>',
                encoding="utf-8",
            )

            with patch("flexdm.services.validate_spec") as validate:
                with self.assertRaises(PlanError) as raised:
                    ExperimentService(thread_settings()).load(spec_path)

        validate.assert_not_called()
        self.assertIn("20000000 jobs", str(raised.exception))

    def test_worker_count_precedence(self) -> None:
        self.assertEqual(3, ExperimentService(thread_settings(threads=5)).worker_count(3))
        self.assertEqual(5, ExperimentService(thread_settings(threads=5)).worker_count())
        with patch("flexdm.services.default_worker_count", return_value=6):
            self.assertEqual(6, ExperimentService(thread_settings()).worker_count())


class RunTests(unittest.TestCase):
    def setUp(self) -> None:
        self._temp = tempfile.TemporaryDirectory()
        self.addCleanup(self._temp.cleanup)
        self.root = Path(self._temp.name)
        self.service = ExperimentService(thread_settings())
        self.experiment = self.service.load(write_health_experiment(self.root))

    def test_run_writes_results_journal_and_summary(self) -> None:
        out_dir = self.root / "out"
        progress = []

        with self.assertLogs("flexdm.services", level="INFO") as logs:
            outcome = self.service.run(
                self.experiment,
                out_dir=out_dir,
                threads=3,
                on_progress=lambda done, total, job, result: progress.append((done, total)),
            )

        self.assertTrue(outcome.all_completed)
        self.assertEqual(20, outcome.report.completed)
        self.assertEqual(20, len(_result_files(out_dir)))
        self.assertEqual(20, len(RunJournal(out_dir / JOURNAL_NAME).load()))
        self.assertEqual(outcome.summary_path, out_dir / SUMMARY_NAME)
        self.assertEqual(21, len(outcome.summary_path.read_text(encoding="utf-8").splitlines()))
        self.assertEqual([(done, 20) for done in range(1, 21)], progress)
        self.assertEqual(1, len(outcome.best))
        self.assertTrue(any("Best for health.arff" in line for line in logs.output))

    def test_results_match_across_thread_counts(self) -> None:
        single, many = self.root / "one", self.root / "seven"

        self.service.run(self.experiment, out_dir=single, threads=1)
        self.service.run(self.experiment, out_dir=many, threads=7)

        self.assertEqual(_result_files(single), _result_files(many))
        self.assertEqual(
            (single / SUMMARY_NAME).read_text(encoding="utf-8"),
            (many / SUMMARY_NAME).read_text(encoding="utf-8"),
        )

    def test_resume_after_crash_runs_only_the_rest(self) -> None:
        reference = self.root / "reference"
        self.service.run(self.experiment, out_dir=reference, threads=1)
        expected = _result_files(reference)

        for crash_after in (1, 5, 12, 19):
            out_dir = self.root / f"crash-{crash_after}"
            with patch("flexdm.services.RunDirectory", CrashAfter(crash_after)), self.assertLogs(
                "flexdm.scheduler", level="ERROR"
            ):
                with self.assertRaises(RunAbortedError):
                    self.service.run(self.experiment, out_dir=out_dir, threads=1)
            self.assertEqual(crash_after, len(_result_files(out_dir)))

            counter = _counting(self.service, self.experiment)
            with patch.object(self.service, "executor", return_value=counter):
                outcome = self.service.run(self.experiment, out_dir=out_dir, threads=1, resume=True)

            with self.subTest(crash_after=crash_after):
                self.assertEqual(20 - crash_after, len(counter.evaluated))
                self.assertEqual(crash_after, outcome.report.skipped)
                self.assertEqual(20, len(outcome.rows))
                self.assertEqual(expected, _result_files(out_dir))
                self.assertEqual(
                    (reference / SUMMARY_NAME).read_text(encoding="utf-8"),
                    (out_dir / SUMMARY_NAME).read_text(encoding="utf-8"),
                )

    def test_resume_of_finished_run_does_nothing(self) -> None:
        out_dir = self.root / "out"
        self.service.run(self.experiment, out_dir=out_dir, threads=2)

        counter = _counting(self.service, self.experiment)
        with patch.object(self.service, "executor", return_value=counter):
            outcome = self.service.run(self.experiment, out_dir=out_dir, resume=True)

        self.assertEqual([], counter.evaluated)
        self.assertEqual(20, outcome.report.skipped)
        self.assertTrue(outcome.all_completed)

    def test_force_reruns_everything(self) -> None:
        out_dir = self.root / "out"
        self.service.run(self.experiment, out_dir=out_dir, threads=2)

        counter = _counting(self.service, self.experiment)
        with patch.object(self.service, "executor", return_value=counter):
            self.service.run(self.experiment, out_dir=out_dir, resume=True, force=True)

        self.assertEqual(20, len(counter.evaluated))


class FailedJobTests(unittest.TestCase):
    def setUp(self) -> None:
        self._temp = tempfile.TemporaryDirectory()
        self.addCleanup(self._temp.cleanup)
        self.root = Path(self._temp.name)
        (self.root / "health.arff").write_text(
            (SAMPLES / "health.arff").read_text(encoding="utf-8"), encoding="utf-8"
        )
        spec_path = self.root / "spec.xml"
        spec_path.write_text(
            '<flexdm><dataset name="health.arff" test="xval:4">'
            '<classifier name="j48"><parameter name="-C" value="{0,0.5}"/></classifier>'
            "</dataset></flexdm>",
            encoding="utf-8",
        )
        self.service = ExperimentService(thread_settings())
        self.experiment = self.service.load(spec_path)

    def test_out_of_range_value_is_a_warning_and_a_failed_job(self) -> None:
        self.assertEqual(1, len(self.experiment.warnings))

        outcome = self.service.run(self.experiment, out_dir=self.root / "out", threads=2)

        self.assertFalse(outcome.all_completed)
        self.assertEqual(1, outcome.report.failed)
        statuses = {row.params: row.status for row in outcome.rows}
        self.assertEqual(JobStatus.FAILED, statuses["-C=0"])
        self.assertEqual(JobStatus.COMPLETED, statuses["-C=0.5"])

    def test_failed_jobs_rerun_only_when_asked(self) -> None:
        out_dir = self.root / "out"
        self.service.run(self.experiment, out_dir=out_dir, threads=1)

        counter = _counting(self.service, self.experiment)
        with patch.object(self.service, "executor", return_value=counter):
            self.service.run(self.experiment, out_dir=out_dir, resume=True)
        self.assertEqual([], counter.evaluated)

        with patch.object(self.service, "executor", return_value=counter):
            outcome = self.service.run(
                self.experiment, out_dir=out_dir, resume=True, retry_failed=True
            )
        self.assertEqual(1, len(counter.evaluated))
        self.assertEqual(1, outcome.report.skipped)


class IncrementalSaveTests(unittest.TestCase):
    def test_results_are_on_disk_as_soon_as_each_job_finishes(self) -> None:
        with tempfile.TemporaryDirectory() as temp_dir:
            root = Path(temp_dir)
            out_dir = root / "out"
            service = ExperimentService(thread_settings(), registry=sleepy_registry(0.2))
            experiment = service.load(write_sleepy_experiment(root, jobs=10))

            mismatches = []

            def check(done, total, job, result):
                on_disk = len(list(out_dir.glob(f"*{RESULT_SUFFIX}")))
                journaled = len(RunJournal(out_dir / JOURNAL_NAME).load())
                if on_disk != done or journaled != done:
                    mismatches.append((done, on_disk, journaled))

            observed: list[int] = []
            finished = threading.Event()

            def monitor():
                while not finished.is_set():
                    observed.append(len(list(out_dir.glob(f"*{RESULT_SUFFIX}"))))
                    time.sleep(0.02)

            watcher = threading.Thread(target=monitor)
            watcher.start()
            try:
                service.run(experiment, out_dir=out_dir, threads=2, on_progress=check)
            finally:
                finished.set()
                watcher.join()

        self.assertEqual([], mismatches)
        self.assertEqual(sorted(observed), observed)
        self.assertTrue(any(0 < count < 10 for count in observed))


class BenchTests(unittest.TestCase):
    def test_bench_writes_csv(self) -> None:
        with tempfile.TemporaryDirectory() as temp_dir:
            root = Path(temp_dir)
            service = ExperimentService(thread_settings())
            experiment = service.load(write_health_experiment(root, test="split"))
            csv_path = root / "bench.csv"

            report = service.bench(experiment, [1, 2], csv_path=csv_path)
            text = csv_path.read_text(encoding="utf-8")

        self.assertEqual(report.to_csv(), text)
        self.assertEqual([1, 2], [row.workers for row in report.rows])

    @unittest.skipIf(
        (psutil.cpu_count(logical=False) or 1) < 4, "needs at least 4 physical cores"
    )
    def test_process_pool_speedup(self) -> None:
        with tempfile.TemporaryDirectory() as temp_dir:
            service = ExperimentService(thread_settings(executor="process"))
            experiment = service.load(write_bench_experiment(Path(temp_dir), jobs=64, rows=200))

            report = service.bench(experiment, [1, 2, 4])

        speedups = {row.workers: row.speedup for row in report.rows}
        self.assertEqual(64, experiment.plan.total_count)
        self.assertGreaterEqual(speedups[2], 1.6)
        self.assertGreaterEqual(speedups[4], 3.0)


if __name__ == "__main__":
    unittest.main()
