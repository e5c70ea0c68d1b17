"""Regenerate the pinned CLI output rows for the linear scenario.

Run from the repository root after an intentional output-format change:
``python scripts/regen_golden.py``.
"""

import shutil
import sys
import tempfile
from pathlib import Path

from resetkit.cli import main

ROWS = 5
GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden" / "c_l"
SUBCOMMANDS = ("bode", "sens", "sigma2", "psi", "simulate")


def head(path: Path, rows: int = ROWS) -> str:
    lines = path.read_text(encoding="utf-8").splitlines()
    return "\n".join(lines[: rows + 1]) + "\n"


def regenerate(dest: Path = GOLDEN) -> list[Path]:
    dest.mkdir(parents=True, exist_ok=True)
    written = []
    with tempfile.TemporaryDirectory() as tmp:
        for cmd in SUBCOMMANDS:
            out = Path(tmp) / cmd
            if main([cmd, "--scenario", "c_l", "--out", str(out)]) != 0:
                sys.exit(f"{cmd} failed")
            for csv in sorted(out.glob("*.csv")):
                target = dest / csv.name
                target.write_text(head(csv), encoding="utf-8")
                written.append(target)
    return written


if __name__ == "__main__":
    for p in regenerate():
        print(p)
