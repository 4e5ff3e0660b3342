"""
Unit tests for certificate, sweep and summary writing.
"""

import json

import numpy as np
import pytest

from experiments import ExperimentResult
from report_writer import ReportWriter, _cell


@pytest.fixture
def sample_result():
    """Small result with a sweep, an extra table and one informational failure."""
    result = ExperimentResult(name="demo", seed=42, parameters={"n": 2})
    result.sweep_header = ["lam", "loss", "ok"]
    result.sweep_rows = [[1.0, 0.1, True], [-10.0, np.float64(2.5), False]]
    result.summary_lines = ["Two rows"]
    result.check("zero_loss", True, "max |loss| 0")
    result.check("tanh_escape", False, "not certified", gating=False)
    result.certificate = {"phi": np.array([1.0, 0.5])}
    result.tables["t_matrix.csv"] = (["c0", "c1"], [[1, 2], [3, 4]])
    return result


class TestCell:
    """Test cases for CSV cell formatting."""

    @pytest.mark.parametrize(
        "value,expected",
        [
            (True, "1"),
            (False, "0"),
            (3, "3"),
            (0.1, "0.10000000000000001"),
            (np.float64(2.5), "2.5"),
            (None, ""),
            ("base", "base"),
        ],
    )
    def test_cell(self, value, expected):
        """Test booleans, integers, floats and labels."""
        assert _cell(value) == expected


class TestReportWriter:
    """Test cases for the report writer."""

    def test_writes_all_files(self, tmp_path, sample_result):
        """Test certificate, sweep, summary and extra tables."""
        paths = ReportWriter(str(tmp_path / "out")).write(sample_result)
        assert set(paths) == {"certificate", "sweep", "summary", "t_matrix.csv"}
        for path in paths.values():
            assert path.exists()
        assert (tmp_path / "out" / "certificate.json").exists()

    def test_certificate_json(self, tmp_path, sample_result):
        """Test the certificate document."""
        paths = ReportWriter(str(tmp_path)).write(sample_result)
        data = json.loads(paths["certificate"].read_text(encoding="utf-8"))
        assert data["experiment"] == "demo"
        assert data["seed"] == 42
        assert data["passed"] is True
        assert data["failing"] == []
        assert data["certificate"]["phi"] == [1.0, 0.5]
        assert [c["gating"] for c in data["checks"]] == [True, False]

    def test_sweep_csv(self, tmp_path, sample_result):
        """Test header and cell formatting in the sweep."""
        paths = ReportWriter(str(tmp_path)).write(sample_result)
        lines = paths["sweep"].read_text(encoding="utf-8").splitlines()
        assert lines == ["lam,loss,ok", "1,0.10000000000000001,1", "-10,2.5,0"]

    def test_summary(self, tmp_path, sample_result):
        """Test the status line and check listing."""
        paths = ReportWriter(str(tmp_path)).write(sample_result)
        lines = paths["summary"].read_text(encoding="utf-8").splitlines()
        assert lines[:3] == ["experiment: demo", "seed: 42", "status: PASS"]
        assert "Two rows" in lines
        assert "  [ok] zero_loss: max |loss| 0" in lines
        assert "  [FAILED] tanh_escape (informational): not certified" in lines
        assert not any(line.startswith("failing properties") for line in lines)

    def test_summary_lists_failures(self, tmp_path, sample_result):
        """Test the failing-properties line of a failed run."""
        sample_result.check("null_residual", False, "too large")
        paths = ReportWriter(str(tmp_path)).write(sample_result)
        lines = paths["summary"].read_text(encoding="utf-8").splitlines()
        assert lines[2] == "status: FAIL"
        assert lines[3] == "failing properties: null_residual"

    def test_output_is_deterministic(self, tmp_path, sample_result):
        """Test that writing twice gives identical bytes."""
        first = ReportWriter(str(tmp_path / "a")).write(sample_result)
        second = ReportWriter(str(tmp_path / "b")).write(sample_result)
        for key in first:
            assert first[key].read_bytes() == second[key].read_bytes()

    def test_empty_sweep(self, tmp_path):
        """Test a result without sweep rows."""
        paths = ReportWriter(str(tmp_path)).write(ExperimentResult(name="empty", seed=0))
        assert paths["sweep"].read_text(encoding="utf-8") == ""
