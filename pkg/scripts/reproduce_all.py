"""Regenerate every reproducible figure into an output directory.

    python scripts/reproduce_all.py OUT_DIR [--threads N]
"""

import argparse
import pathlib
import time

from qemitter.cli import FIGURES, cmd_reproduce


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=pathlib.Path)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    for fig in FIGURES:
        t0 = time.perf_counter()
        bundle = cmd_reproduce(fig, threads=args.threads)
        files = bundle.write(args.out / fig)
        print(f"{fig}: {len(files)} files, {time.perf_counter() - t0:.1f} s")
        for entry in bundle.summary:
            print(f"  {entry.key} = {entry.value}")


if __name__ == "__main__":
    main()
