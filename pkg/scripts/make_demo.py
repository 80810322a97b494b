#!/usr/bin/env python3
"""Write the self-contained demo fixture (corpus, model, transcript, config)
and print a ready-to-run command line for each CLI entry point."""

import argparse
import sys

from crag import demo


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out_dir")
    args = p.parse_args()
    paths = demo.write_fixture(args.out_dir)
    cfg = paths["config"]
    print(f"fixture written under {args.out_dir}")
    print("try:")
    print(f"  crag run --config {cfg} --dialogue-id showcase --variant full")
    print(f"  crag eval --config {cfg} --out-dir {args.out_dir}/reports "
          f"--variant full --k 5")
    print(f"  crag serve --config {cfg}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
