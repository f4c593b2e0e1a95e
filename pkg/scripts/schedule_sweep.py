#!/usr/bin/env python3
"""Sweep one program across GC schedules and show how results diverge.

Usage: python scripts/schedule_sweep.py PROGRAM.lua [--mode fin-weak]
                                        [--seeds 12] [--fuel 5000]

Prints one line per schedule plus the resulting observation set.  A
deterministic program shows a single canonical result no matter the
schedule; the weak-table examples split.
"""

import argparse
import sys
from collections import defaultdict
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from luagc.executor import Schedule, run
from luagc.interp import load_program


def main(argv):
    parser = argparse.ArgumentParser()
    parser.add_argument("program")
    parser.add_argument("--mode", default="fin-weak",
                        choices=["simple", "fin", "fin-weak"])
    parser.add_argument("--seeds", type=int, default=12)
    parser.add_argument("--fuel", type=int, default=5_000)
    args = parser.parse_args(argv)

    mode = args.mode.replace("-", "_")
    text = Path(args.program).read_text()
    schedules = [
        Schedule("never", mode),
        Schedule("eager", mode),
        Schedule("periodic", mode, period=3),
        Schedule("periodic", mode, period=7),
    ] + [
        Schedule("random", mode, seed=s, probability=0.3)
        for s in range(args.seeds)
    ]

    by_result = defaultdict(list)
    for sched in schedules:
        rec = run(load_program(text, args.program), sched, fuel=args.fuel)
        by_result[rec.result.key].append(sched.describe())
        print(f"{sched.describe():>34}  ->  {rec.result.key[:80]}")

    print()
    print(f"observation set size: {len(by_result)}")
    for key, scheds in sorted(by_result.items()):
        print(f"  {len(scheds):>2} schedule(s): {key[:100]}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
