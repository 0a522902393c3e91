#!/usr/bin/env python3
"""Run the full experiment: dataset, training, inference, evaluation, sweeps.

Equivalent to the CLI sequence

    nsadm generate && nsadm train && nsadm infer --method {nsadm,mt,passthrough}
    && nsadm evaluate && nsadm sweep && nsadm validate-stats

with one flag set shared across stages. Stages that already produced their
outputs are re-run (every command is idempotent for one config+seed, so this
is safe and cheap to resume).
"""

import argparse
import json
import sys
import time

from nsadm import pipeline
from nsadm.config import load_config


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None, help="experiment config JSON")
    ap.add_argument("--out", default=None, help="output directory override")
    ap.add_argument("--seed", type=int, default=None, help="global seed override")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--skip-validate", action="store_true",
                    help="skip the Monte Carlo estimator validation stage")
    args = ap.parse_args(argv)

    cfg = load_config(args.config)
    if args.out is not None:
        cfg.run.out_dir = args.out
    if args.seed is not None:
        cfg.run.seed = args.seed

    def stage(name, fn):
        t0 = time.time()
        result = fn()
        print(f"[{time.time() - t0:7.1f}s] {name}: {result}", flush=True)
        return result

    stage("generate", lambda: pipeline.cmd_generate(cfg, jobs=args.jobs))
    stage("train", lambda: pipeline.cmd_train(
        cfg, progress=lambda s, n, l: print(f"    step {s}/{n} loss {l:.5f}",
                                            flush=True)))
    for method in pipeline.METHODS:
        stage(f"infer[{method}]", lambda m=method: pipeline.cmd_infer(
            cfg, m, jobs=args.jobs))
    stage("sweep", lambda: pipeline.cmd_sweep(cfg, jobs=args.jobs))
    _, summary_path = stage("evaluate", lambda: pipeline.cmd_evaluate(cfg))
    if not args.skip_validate:
        stage("validate-stats", lambda: pipeline.cmd_validate_stats(cfg))

    with open(summary_path) as f:
        summary = json.load(f)
    print(json.dumps(summary["axes"], indent=1, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
