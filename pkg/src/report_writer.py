"""
Certificate Report Writer

Writes the outputs of one experiment run into a directory:
certificate.json, sweep.csv, summary.txt and any extra tables
(grid fields, T matrices). Output depends only on the result, never
on wall-clock time.
"""

import csv
import logging
from pathlib import Path
from typing import Any, Dict, List

from experiments import ExperimentResult
from utils import canonical_json, format_sig, sanitize_filename


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_sig(value)
    if value is None:
        return ""
    try:
        return format_sig(float(value))
    except (TypeError, ValueError):
        return str(value)


class ReportWriter:
    """Serializes ExperimentResult objects"""

    def __init__(self, out_dir: str):
        self.out_dir = Path(out_dir)

        self.logger = logging.getLogger(__name__)
        if not self.logger.handlers:
            console_handler = logging.StreamHandler()
            formatter = logging.Formatter(
                "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
            )
            console_handler.setFormatter(formatter)
            self.logger.addHandler(console_handler)
            self.logger.setLevel(logging.INFO)
            self.logger.propagate = False

    def write(self, result: ExperimentResult) -> Dict[str, Path]:
        """Write every output file and return their paths by kind"""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "certificate": self.write_certificate(result),
            "sweep": self.write_csv("sweep.csv", result.sweep_header, result.sweep_rows),
            "summary": self.write_summary(result),
        }
        for name, (header, rows) in sorted(result.tables.items()):
            paths[name] = self.write_csv(name, header, rows)
        self.logger.debug(f"Wrote {len(paths)} file(s) to {self.out_dir}")
        return paths

    def write_certificate(self, result: ExperimentResult) -> Path:
        path = self.out_dir / "certificate.json"
        path.write_text(canonical_json(result.to_dict()), encoding="utf-8")
        return path

    def write_csv(self, name: str, header: List[str], rows: List[List[Any]]) -> Path:
        path = self.out_dir / sanitize_filename(name)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            if header:
                writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        return path

    def write_summary(self, result: ExperimentResult) -> Path:
        lines = [
            f"experiment: {result.name}",
            f"seed: {result.seed}",
            f"status: {'PASS' if result.passed else 'FAIL'}",
        ]
        if result.failing:
            lines.append(f"failing properties: {', '.join(result.failing)}")
        lines.append("")
        for line in result.summary_lines:
            lines.append(line)
        lines.append("")
        lines.append("checks:")
        for check in result.checks:
            mark = "ok" if check.passed else "FAILED"
            suffix = "" if check.gating else " (informational)"
            lines.append(f"  [{mark}] {check.name}{suffix}: {check.detail}")

        path = self.out_dir / "summary.txt"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path
