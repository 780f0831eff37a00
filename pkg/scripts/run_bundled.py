"""Run every bundled config through the CLI and print exit code and wall time.

    python3 scripts/run_bundled.py [--out DIR] [NAME ...]
"""

import argparse
import time
from contextlib import redirect_stdout
from io import StringIO
from pathlib import Path

from esddfd.cli import bundled_configs, load_raw, main


def run_one(name: str, out: Path):
    command = load_raw(name)["command"]
    buf = StringIO()
    start = time.perf_counter()
    with redirect_stdout(buf):
        code = main([command, "--config", name, "--out", str(out / name)])
    elapsed = time.perf_counter() - start
    return command, code, elapsed, buf.getvalue().strip().splitlines()


def cli():
    parser = argparse.ArgumentParser()
    parser.add_argument("names", nargs="*")
    parser.add_argument("--out", default="out/bundled")
    args = parser.parse_args()
    names = args.names or bundled_configs()
    worst = 0
    for name in names:
        command, code, elapsed, lines = run_one(name, Path(args.out))
        worst = max(worst, code)
        last = lines[-1] if lines else ""
        print(f"{name:<22} {command:<10} exit={code}  {elapsed:6.2f}s  {last}")
    return worst


if __name__ == "__main__":
    raise SystemExit(cli())
