"""Run every shipped config through the CLI and report wall time per config.

    python3 scripts/run_configs.py [--out results/]
"""

import argparse
import json
import sys
import time
from pathlib import Path

from oampump import cli

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=ROOT / "results")
    args = ap.parse_args()
    failed = 0
    for path in sorted((ROOT / "configs").glob("*.json")):
        exp = json.loads(path.read_text())["experiment"]
        t0 = time.perf_counter()
        code = cli.main([exp, "--config", str(path), "--out", str(args.out / path.stem)])
        dt = time.perf_counter() - t0
        failed += code != 0
        print(f"{path.stem:24s} exit={code} {dt:6.1f}s", flush=True)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
