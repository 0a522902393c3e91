#!/usr/bin/env python3
"""Print a readable table of experiment results from a run directory."""

import argparse
import csv
import json
import os
import sys
from collections import defaultdict


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("run_dir", help="run output directory (holds metrics.csv)")
    args = ap.parse_args(argv)

    metrics_path = os.path.join(args.run_dir, "metrics.csv")
    if not os.path.isfile(metrics_path):
        print(f"no metrics.csv under {args.run_dir}; run evaluate first",
              file=sys.stderr)
        return 4

    by_key = defaultdict(list)
    with open(metrics_path) as f:
        for row in csv.DictReader(f):
            by_key[(float(row["power"]), row["method"])].append(
                (float(row["rmse_m"]), float(row["chamfer_m2"]),
                 float(row["coverage"])))

    print(f"{'power':>7} {'method':>12} {'rmse_m':>10} {'chamfer_m2':>12} "
          f"{'coverage':>9} {'scenes':>7}")
    for power, method in sorted(by_key):
        rows = by_key[(power, method)]
        rmse = sum(r[0] for r in rows) / len(rows)
        cd = sum(r[1] for r in rows) / len(rows)
        cov = sum(r[2] for r in rows) / len(rows)
        print(f"{power:>7g} {method:>12} {rmse:>10.4f} {cd:>12.4f} "
              f"{cov:>9.4f} {len(rows):>7}")

    summary_path = os.path.join(args.run_dir, "summary.json")
    if os.path.isfile(summary_path):
        with open(summary_path) as f:
            axes = json.load(f)["axes"]
        print("\ntrend verdicts:")
        print(json.dumps(axes, indent=1, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
