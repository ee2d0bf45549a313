"""Run every experiment with its reference settings into one results tree.

Usage: python scripts/reproduce_all.py [results_dir]
"""

import sys
from pathlib import Path

from sspdmatrix.cli import main as cli

RUNS = [
    ("jitter", ["jitter", "--preset", "paper-jitter", "--seed", "1"]),
    ("ringdown-overcoupled", ["ringdown", "--preset", "paper-overcoupled", "--seed", "1"]),
    ("ringdown-undercoupled", ["ringdown", "--preset", "paper-undercoupled", "--seed", "1"]),
    ("spectrum-overcoupled", ["spectrum", "--preset", "paper-overcoupled"]),
    ("spectrum-undercoupled", ["spectrum", "--preset", "paper-undercoupled"]),
    ("efficiency", ["efficiency", "--seed", "1"]),
    ("darkcounts", ["darkcounts", "--seed", "1"]),
    ("survey", ["survey"]),
]


def main() -> int:
    root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("results")
    codes = {}
    for name, args in RUNS:
        print(f"== {name}", flush=True)
        codes[name] = cli(args + ["--out", str(root / name)])
    failed = [name for name, code in codes.items() if code != 0]
    print("errors in: " + ", ".join(failed) if failed else "all runs completed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
