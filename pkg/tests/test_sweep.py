"""种子扫描与报告输出测试。"""
import json

import pytest

from app.cli.models.reports import MetricsReport, ReconstructReport, SweepSummary, TraceSummary
from app.harness.reports import ReportWriter, read_csv
from app.harness.sweep import SweepRunner


class TestSweepRunner:
    def test_results_in_seed_order(self):
        runner = SweepRunner(max_workers=4, show_progress=False)
        outcomes = runner.run([5, 3, 9, 1], lambda seed: seed * 2)
        assert [o.seed for o in outcomes] == [5, 3, 9, 1]
        assert [o.result for o in outcomes] == [10, 6, 18, 2]
        assert all(o.ok for o in outcomes)

    def test_failures_captured(self):
        def task(seed):
            if seed == 2:
                raise ValueError("bad seed")
            return seed

        outcomes = SweepRunner(max_workers=2, show_progress=False).run([1, 2, 3], task)
        assert [o.ok for o in outcomes] == [True, False, True]
        assert isinstance(outcomes[1].error, ValueError)

    def test_single_worker_sequential(self):
        order = []
        SweepRunner(max_workers=1, show_progress=False).run([3, 1, 2], order.append)
        assert order == [3, 1, 2]

    def test_empty(self):
        assert SweepRunner(show_progress=False).run([], lambda seed: seed) == []

    def test_invalid_workers(self):
        with pytest.raises(ValueError):
            SweepRunner(max_workers=0)


class TestReportWriter:
    def _report(self, **overrides):
        data = dict(
            seed=1,
            created_at="2024-01-01T00:00:00",
            config={"steps": 5},
            max_abs_error=1e-15,
            tolerance=1e-9,
            passed=True,
            num_steps=4,
            latent_shape=[4, 8, 8],
            output_latent="out/reconstruction.dlt",
            trace=[TraceSummary(step=1, timestep=1000, max_abs_error=1e-16)],
        )
        data.update(overrides)
        return ReconstructReport(**data)

    def test_json_has_schema_version(self, tmp_path):
        path = ReportWriter().write_json(tmp_path / "report.json", self._report())
        payload = json.loads(path.read_text(encoding="utf-8"))
        assert payload["schema"] == 1
        assert payload["command"] == "reconstruct"
        assert payload["trace"][0]["timestep"] == 1000

    def test_infinite_psnr_serialized_as_string(self):
        report = MetricsReport(
            created_at="2024-01-01T00:00:00",
            config={},
            reference_path="a.dlt",
            candidate_path="b.dlt",
            max_val=1.0,
            mse=0.0,
            psnr="inf",
        )
        payload = ReportWriter().to_payload(report)
        assert payload["psnr"] == "inf"
        assert payload["seed"] is None

    def test_schema_violation_rejected(self):
        report = SweepSummary.model_construct(
            schema_version=1,
            command="edit",
            created_at="now",
            seeds="not-a-list",
            failed_seeds=[],
            metric="x",
            passed=True,
        )
        with pytest.raises(ValueError, match="schema"):
            ReportWriter().to_payload(report)

    def test_csv_header_and_round_trip(self, tmp_path):
        rows = [{"step": 1, "timestep": 10, "max_abs_error": 0.5}, {"step": 2, "timestep": 5, "max_abs_error": 0.25}]
        path = ReportWriter().write_csv(tmp_path / "trace.csv", rows, ["step", "timestep", "max_abs_error"])
        assert path.read_text(encoding="utf-8").splitlines()[0] == "# schema: 1"
        frame = read_csv(path)
        assert list(frame.columns) == ["step", "timestep", "max_abs_error"]
        assert frame["max_abs_error"].tolist() == [0.5, 0.25]
        assert frame["timestep"].tolist() == [10, 5]
