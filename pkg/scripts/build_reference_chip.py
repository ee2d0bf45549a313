"""Regenerate the bundled reference chip layout from its generator.

Usage: python scripts/build_reference_chip.py [output.json]
"""

import sys
from pathlib import Path

from sspdmatrix.chipmatrix import dump_chip_config, reference_chip_path
from sspdmatrix.presets import build_reference_chip


def main() -> None:
    path = Path(sys.argv[1]) if len(sys.argv) > 1 else reference_chip_path()
    layout = build_reference_chip()
    dump_chip_config(layout, path)
    print(f"wrote {len(layout)} cells, {len(layout.designs)} designs to {path}")


if __name__ == "__main__":
    main()
