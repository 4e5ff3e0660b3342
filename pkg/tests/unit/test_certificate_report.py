"""
Unit tests for the markdown certificate report.
"""

import json
import os
import sys

import pytest

# Add scripts directory to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "..", "scripts"))

import generate_certificate_report_md as report  # noqa: E402
from generate_certificate_report_md import anchor_for, load_certificates, render  # noqa: E402


def _certificate(name, passed, checks, seed=1):
    return {
        "experiment": name,
        "seed": seed,
        "passed": passed,
        "failing": [c["name"] for c in checks if c["gating"] and not c["passed"]],
        "checks": checks,
    }


def _check(name, passed, gating=True, detail=""):
    return {"name": name, "passed": passed, "gating": gating, "detail": detail}


@pytest.fixture
def results_dir(tmp_path):
    """Results tree with one passing run, one failing run and one unreadable file."""
    root = tmp_path / "results"
    runs = {
        "wpinn-kernel": _certificate(
            "wpinn-kernel",
            True,
            [_check("kernel[n=2]", True), _check("finer_rules_see_it", False, gating=False, detail="q=16: 0")],
        ),
        "dr-affine": _certificate("dr-affine", True, [_check("stationary", True), _check("closed_form", True)], seed=7),
        "reg-zero-loss": _certificate(
            "reg-zero-loss",
            False,
            [_check("zero_loss[tv]", False, detail="pointwise loss 1e-06"), _check("eps_monotone[elastica]", True)],
        ),
    }
    for name, cert in runs.items():
        (root / name).mkdir(parents=True)
        (root / name / "certificate.json").write_text(json.dumps(cert), encoding="utf-8")
    (root / "broken").mkdir()
    (root / "broken" / "certificate.json").write_text("{not json", encoding="utf-8")
    return root


class TestLoadCertificates:
    """Test cases for reading a results directory."""

    def test_sorted_by_experiment(self, results_dir, capsys):
        """Test ordering and skipping of unreadable files."""
        certificates = load_certificates(results_dir)
        assert [c["experiment"] for c in certificates] == ["dr-affine", "reg-zero-loss", "wpinn-kernel"]
        assert "Skipping" in capsys.readouterr().out

    def test_empty_directory(self, tmp_path):
        """Test a results directory without runs."""
        assert load_certificates(tmp_path) == []


class TestRender:
    """Test cases for the markdown document."""

    def test_table_rows(self, results_dir):
        """Test one row per experiment with gating check counts."""
        lines = render(load_certificates(results_dir)).splitlines()
        assert lines[0] == "# Ill-Posedness Certificates"
        rows = [line for line in lines if line.startswith("| `")]
        assert len(rows) == 3
        assert rows[0].startswith("| `dr-affine` | " + anchor_for("dr-affine"))
        assert rows[0].endswith("| 7 | ✅ pass | 2/2 |")
        assert rows[1].endswith("| 1 | ❌ fail | 1/2 |")
        assert rows[2].endswith("| 1 | ✅ pass | 1/1 |")

    def test_failing_and_informational_sections(self, results_dir):
        """Test that only experiments with unmet checks get a section."""
        text = render(load_certificates(results_dir))
        assert "## dr-affine" not in text
        assert "## reg-zero-loss\n\n- **zero_loss[tv]** (failing): pointwise loss 1e-06" in text
        assert "- **finer_rules_see_it** (informational): q=16: 0" in text

    def test_unknown_experiment_has_no_anchor(self):
        """Test the anchor lookup for names outside the registry."""
        assert anchor_for("not-registered") == ""
        assert anchor_for("dr-affine")


class TestMain:
    """Test cases for the script entry point."""

    def test_writes_report(self, results_dir, tmp_path, mocker):
        """Test that main writes the rendered report."""
        output = tmp_path / "docs" / "report.md"
        mocker.patch.object(report, "RESULTS_DIR", results_dir)
        mocker.patch.object(report, "OUTPUT_PATH", output)
        assert report.main() == 0
        assert output.read_text(encoding="utf-8").startswith("# Ill-Posedness Certificates")

    def test_missing_results_directory(self, tmp_path, mocker):
        """Test that a missing results directory is not an error."""
        output = tmp_path / "report.md"
        mocker.patch.object(report, "RESULTS_DIR", tmp_path / "missing")
        mocker.patch.object(report, "OUTPUT_PATH", output)
        assert report.main() == 0
        assert not output.exists()
