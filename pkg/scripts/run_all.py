#!/usr/bin/env python3
"""Run every shipped experiment config and print one summary line per run."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from hmentropy.experiments import load_config, run_experiment

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--configs", default=str(ROOT / "configs"))
    ap.add_argument("--out", default="out")
    ap.add_argument("--only", nargs="*", help="experiment names to run (default: all)")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    failed = 0
    for path in sorted(Path(args.configs).glob("*.yaml")):
        cfg = load_config(path)
        if args.only and cfg.experiment not in args.only:
            continue
        res = run_experiment(cfg, Path(args.out) / cfg.experiment)
        wall = res["manifest"]["wall_time_s"]
        status = "PASS" if res.get("passed") else "FAIL"
        failed += status == "FAIL"
        print(f"{status}  {cfg.experiment:<22} {wall:8.1f} s  -> {Path(args.out) / cfg.experiment}")
        for name, ok in res.get("checks", {}).items():
            print(f"      {name:<34} {'ok' if ok else 'FAILED'}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
