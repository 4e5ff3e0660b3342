#!/usr/bin/env python3
"""Generate a markdown summary of experiment certificates.

The script walks a results directory (default results/) in which every
subdirectory holds the output of one `forge run`, and writes one table
row per experiment plus the failing and informational checks.

Output written to docs/certificate_report.md
"""
from __future__ import annotations

import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List

# Add src directory to path for imports
sys.path.append(os.path.join(os.path.dirname(__file__), "..", "src"))

try:
    from experiments import EXPERIMENTS
except ImportError:
    # Fallback if import fails
    EXPERIMENTS = {}

RESULTS_DIR = Path(os.environ.get("FORGE_RESULTS", "results"))
OUTPUT_PATH = Path(os.environ.get("FORGE_REPORT", "docs/certificate_report.md"))


def load_certificates(results_dir: Path) -> List[Dict]:
    """Return parsed certificate.json documents sorted by experiment name."""
    certificates = []
    for path in sorted(results_dir.glob("*/certificate.json")):
        try:
            with path.open("r", encoding="utf-8") as f:
                certificates.append(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            print(f"⚠️  Skipping {path}: {e}")
    return sorted(certificates, key=lambda c: c.get("experiment", ""))


def anchor_for(name: str) -> str:
    spec = EXPERIMENTS.get(name)
    return spec.anchor if spec else ""


def render(certificates: List[Dict]) -> str:
    """Render the markdown document."""
    lines = ["# Ill-Posedness Certificates", ""]
    lines.append(
        f"_Generated: {datetime.now(timezone.utc).isoformat().replace('+00:00', 'Z')} "
        f"from {RESULTS_DIR}. {len(certificates)} experiment(s)._"
    )
    lines.append("")
    lines.append("| Experiment | Anchor | Seed | Status | Checks |")
    lines.append("|------------|--------|------|--------|--------|")
    for cert in certificates:
        checks = cert.get("checks", [])
        gating = [c for c in checks if c.get("gating", True)]
        passed = sum(1 for c in gating if c.get("passed"))
        status = "✅ pass" if cert.get("passed") else "❌ fail"
        lines.append(
            f"| `{cert.get('experiment', '?')}` | {anchor_for(cert.get('experiment', ''))} "
            f"| {cert.get('seed', '')} | {status} | {passed}/{len(gating)} |"
        )

    for cert in certificates:
        notes = [c for c in cert.get("checks", []) if not c.get("passed")]
        if not notes:
            continue
        lines.append("")
        lines.append(f"## {cert.get('experiment', '?')}")
        lines.append("")
        for check in notes:
            kind = "failing" if check.get("gating", True) else "informational"
            lines.append(f"- **{check['name']}** ({kind}): {check.get('detail', '')}")
    return "\n".join(lines) + "\n"


def main() -> int:
    """Generate the certificate report markdown file."""
    if not RESULTS_DIR.exists():
        print(f"Results directory not found at {RESULTS_DIR}, aborting markdown generation.")
        return 0

    certificates = load_certificates(RESULTS_DIR)
    if not certificates:
        print("No certificates found; markdown not generated.")
        return 0

    OUTPUT_PATH.parent.mkdir(parents=True, exist_ok=True)
    OUTPUT_PATH.write_text(render(certificates), encoding="utf-8")
    print(f"Wrote certificate report markdown to {OUTPUT_PATH}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
