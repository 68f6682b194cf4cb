#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
GraphSurgeon Seed Sweep

Trains and evaluates one model per seed, each in its own process and
output directory, and summarizes the test metric across seeds.

Usage:
    python seed_sweep.py --dataset data/sbm --out runs/sweep [options]

Features:
- One process per seed (runs share nothing but the dataset directory)
- Per-seed directories ``seed_<n>`` holding the usual train/eval outputs
- ``summary.csv`` with one row per seed plus mean and standard deviation
"""

import argparse
import concurrent.futures
import csv
import io
import logging
import re
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from graph_surgeon import __version__
from graph_surgeon.cli import main as surgeon_main
from graph_surgeon.dataio import atomic_write_text

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)
logger = logging.getLogger('seed_sweep')

RESULTS_PATTERN = re.compile(r"^metric=(\S+) value=(\S+) split=(\S+) seed=(\d+)$")


def run_seed(seed: int, dataset: str, out_dir: str, config: Optional[str],
             extra: List[str]) -> Dict:
    """Train then evaluate one seed; returns the parsed results line"""
    seed_dir = Path(out_dir) / f"seed_{seed}"
    common = ["--dataset", dataset, "--out", str(seed_dir), "--seed", str(seed)] + extra
    if config:
        common += ["--config", config]

    for command in ("train", "eval"):
        code = surgeon_main([command] + common)
        if code != 0:
            return {"seed": seed, "status": f"{command} exited {code}"}

    line = (seed_dir / "results.txt").read_text(encoding="utf-8").strip()
    match = RESULTS_PATTERN.match(line)
    if not match:
        return {"seed": seed, "status": f"unparseable results line {line!r}"}
    return {"seed": seed, "status": "ok", "metric": match.group(1), "value": float(match.group(2))}


def summarize(results: List[Dict]) -> str:
    """CSV with per-seed rows followed by mean and std rows"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["seed", "metric", "value", "status"])
    for r in sorted(results, key=lambda r: r["seed"]):
        value = repr(r["value"]) if "value" in r else ""
        writer.writerow([r["seed"], r.get("metric", ""), value, r["status"]])

    values = [r["value"] for r in results if r["status"] == "ok"]
    metric = next((r["metric"] for r in results if r["status"] == "ok"), "")
    if values:
        writer.writerow(["mean", metric, repr(float(np.mean(values))), f"n={len(values)}"])
        writer.writerow(["std", metric, repr(float(np.std(values))), f"n={len(values)}"])
    return buffer.getvalue()


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        description=f"GraphSurgeon seed sweep v{__version__}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Five seeds of the default configuration:
  python seed_sweep.py --dataset data/sbm --out runs/sweep

  # Post mode with the row constraint, four workers:
  python seed_sweep.py --dataset data/sbm --out runs/post_row --seeds 0,1,2,3,4,5,6,7 \\
      --workers 4 -- --mode post --constraint row
        """,
    )
    parser.add_argument("--dataset", required=True, help="Dataset directory")
    parser.add_argument("--out", required=True, help="Sweep output directory")
    parser.add_argument("--config", help="INI run configuration shared by every seed")
    parser.add_argument("--seeds", default="0,1,2,3,4", help="Comma separated seeds (default: 0-4)")
    parser.add_argument("--workers", type=int, default=None,
                        help="Worker processes (default: one per CPU)")
    parser.add_argument("extra", nargs=argparse.REMAINDER,
                        help="Flags passed through to surgeon after --")
    args = parser.parse_args(argv)

    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        parser.error(f"--seeds must be comma separated integers, got {args.seeds!r}")
    extra = [a for a in args.extra if a != "--"]
    Path(args.out).mkdir(parents=True, exist_ok=True)

    logger.info(f"Sweeping {len(seeds)} seeds into {args.out}")
    results = []
    with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as executor:
        futures = {
            executor.submit(run_seed, seed, args.dataset, args.out, args.config, extra): seed
            for seed in seeds
        }
        for future in concurrent.futures.as_completed(futures):
            seed = futures[future]
            try:
                result = future.result()
            except Exception as e:
                result = {"seed": seed, "status": f"crashed: {e}"}
            if result["status"] == "ok":
                logger.info(f"seed {seed}: {result['metric']}={result['value']:.4f}")
            else:
                logger.error(f"seed {seed}: {result['status']}")
            results.append(result)

    summary_path = Path(args.out) / "summary.csv"
    atomic_write_text(summary_path, summarize(results))
    logger.info(f"Wrote {summary_path}")
    return 0 if all(r["status"] == "ok" for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
