#!/usr/bin/env python3
"""
Ill-Posedness Certificate CLI

Command-line interface for running the certification experiments and
writing their certificates, sweeps and summaries.
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from experiments import (
    EXPERIMENTS,
    ConfigError,
    ExperimentRunner,
    list_experiments,
    load_config,
)
from report_writer import ReportWriter
from utils import format_duration

EXIT_PASS = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def create_parser() -> argparse.ArgumentParser:
    """Create the command-line argument parser"""

    parser = argparse.ArgumentParser(
        prog="forge",
        description="Certify ill-posedness of neural discretizations of variational problems",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s list
  %(prog)s run dr-affine --out results/dr-affine
  %(prog)s run dr-nonuniqueness --config config/experiments/dr-nonuniqueness.json --out out
  %(prog)s run reg-fd-contrast --out out --seed 7
  %(prog)s run wpinn-kernel --out out --verbose
        """,
    )
    parser.add_argument(
        "--verbose", action="store_true", help="Enable debug logging"
    )

    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")

    run_parser = subparsers.add_parser(
        "run", help="Run one experiment and write its certificate"
    )
    run_parser.add_argument("name", help="Experiment name (see 'list')")
    run_parser.add_argument(
        "--config",
        "-c",
        metavar="PATH",
        help="Experiment config JSON (default: the bundled config)",
    )
    run_parser.add_argument(
        "--out",
        "-o",
        metavar="DIR",
        help="Output directory (default: results/<name>)",
    )
    run_parser.add_argument(
        "--seed", type=int, help="Override the seed from the config"
    )
    run_parser.add_argument(
        "--verbose",
        action="store_true",
        default=argparse.SUPPRESS,
        help="Enable debug logging",
    )

    list_parser = subparsers.add_parser(
        "list", help="List experiments with their anchors and runtimes"
    )
    list_parser.add_argument(
        "--format",
        "-f",
        choices=["text", "json"],
        default="text",
        help="Output format (default: text)",
    )

    return parser


def setup_logging(verbose: bool = False) -> logging.Logger:
    """Setup logging configuration for CLI operations"""

    log_level = logging.DEBUG if verbose else logging.INFO

    console_handler = logging.StreamHandler()
    formatter = logging.Formatter(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )
    console_handler.setFormatter(formatter)

    logger = logging.getLogger("forge_cli")
    logger.setLevel(log_level)

    # Only add handler if not already present
    if not logger.handlers:
        logger.addHandler(console_handler)

    if verbose:
        for name in ("experiments", "report_writer"):
            logging.getLogger(name).setLevel(logging.DEBUG)

    return logger


def handle_list(args) -> int:
    """Handle experiment listing"""

    specs = list_experiments()
    if getattr(args, "format", "text") == "json":
        payload = [
            {
                "name": spec.name,
                "anchor": spec.anchor,
                "runtime_seconds": spec.runtime_seconds,
                "description": spec.description,
            }
            for spec in specs
        ]
        print(json.dumps(payload, indent=2))
        return EXIT_PASS

    print(f"📊 {len(specs)} experiments")
    print("=" * 60)
    width = max(len(spec.name) for spec in specs)
    for spec in specs:
        print(
            f"{spec.name.ljust(width)}  → {spec.anchor}  "
            f"[{format_duration(spec.runtime_seconds)}]"
        )
    return EXIT_PASS


def handle_run(args) -> int:
    """Handle a single experiment run"""

    logger = setup_logging(getattr(args, "verbose", False))

    if args.name not in EXPERIMENTS:
        print(f"❌ Unknown experiment '{args.name}'")
        print("💡 Available: " + ", ".join(EXPERIMENTS))
        return EXIT_USAGE

    try:
        config = load_config(args.name, args.config)
    except ConfigError as e:
        print(f"❌ Config error: {e}")
        return EXIT_USAGE

    out_dir = args.out or f"results/{args.name}"
    seed = args.seed if args.seed is not None else config["seed"]
    print(f"🔬 Running {args.name} (seed {seed})")

    try:
        result = ExperimentRunner().run(args.name, config, args.seed)
    except Exception as e:
        logger.exception(f"Experiment {args.name} raised")
        print(f"❌ Error running {args.name}: {e}")
        return EXIT_FAILURE

    paths = ReportWriter(out_dir).write(result)
    for line in result.summary_lines:
        print(f"   {line}")
    for check in result.checks:
        if not check.passed:
            marker = "❌" if check.gating else "⚠️ "
            print(f"   {marker} {check.name}: {check.detail}")
    print(f"📄 Certificate written to {paths['certificate']}")

    if result.passed:
        print(f"✅ {args.name}: all certified properties pass")
        return EXIT_PASS
    print(f"❌ {args.name}: failing properties: {', '.join(result.failing)}")
    return EXIT_FAILURE


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""

    parser = create_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    if args.command == "run":
        return handle_run(args)
    elif args.command == "list":
        return handle_list(args)

    parser.print_help()
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
