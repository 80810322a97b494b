#!/usr/bin/env python3
"""Run the full K-sweep over a corpus and write report.jsonl + confusion.csv.

Thin wrapper over `crag eval` defaults for batch experiment runs, e.g.:

    python3 scripts/run_sweep.py --config fixtures/config.toml --out-dir runs/sweep
"""

import argparse
import sys

from crag.cli import main as crag_main


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--variant", default=None)
    p.add_argument("--cutoff-year", type=int, default=None)
    p.add_argument("--noise-seed", type=int, default=None)
    args = p.parse_args()

    argv = ["eval", "--config", args.config, "--out-dir", args.out_dir]
    if args.variant:
        argv += ["--variant", args.variant]
    if args.cutoff_year is not None:
        argv += ["--cutoff-year", str(args.cutoff_year)]
    if args.noise_seed is not None:
        argv += ["--noise-seed", str(args.noise_seed)]
    return crag_main(argv)


if __name__ == "__main__":
    sys.exit(main())
