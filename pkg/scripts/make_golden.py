"""Regenerate the regression snapshots under tests/golden/.

Run only after the outputs have been checked by hand; the CLI tests compare
every later run against these files.

    python scripts/make_golden.py [fig2 fig3a figs8]
"""

import argparse
import pathlib

from qemitter.cli import FIGURES, cmd_reproduce

GOLDEN = pathlib.Path(__file__).resolve().parents[1] / "tests" / "golden"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("figures", nargs="*", metavar="FIGURE", help=", ".join(FIGURES))
    args = ap.parse_args()
    unknown = set(args.figures) - set(FIGURES)
    if unknown:
        ap.error(f"unknown figure(s): {', '.join(sorted(unknown))}")
    for fig in args.figures or FIGURES:
        files = cmd_reproduce(fig).write(GOLDEN / fig)
        print(f"{fig}: {len(files)} files")


if __name__ == "__main__":
    main()
