#!/usr/bin/env python3
"""Run the four corpus property experiments and print a combined report.

Usage: python scripts/run_properties.py [corpus-dir] [--seeds 0,1,2]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from luagc.cli import main as cli_main


def run(argv):
    parser = argparse.ArgumentParser()
    parser.add_argument("corpus", nargs="?",
                        default=str(Path(__file__).resolve().parent.parent
                                    / "corpus"))
    parser.add_argument("--seeds", default="0,1,2")
    args = parser.parse_args(argv)

    worst = 0
    for prop in ("correctness", "determinism", "postponement",
                 "finalizer-once"):
        print(f"== {prop}", file=sys.stderr)
        code = cli_main([
            "properties", args.corpus, "--property", prop,
            "--seeds", args.seeds,
        ])
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(run(sys.argv[1:]))
