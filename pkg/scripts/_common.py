"""Shared plumbing for the experiment runners."""

import argparse
import json
import os
import time

from robustood.harness import experiments as ex

def parser(description, default_seeds):
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--config", help="JSON experiment config; overrides --seeds/--seed")
    ap.add_argument("--seeds", type=int, default=default_seeds, help="number of seeds")
    ap.add_argument("--seed", type=int, default=0, help="first seed")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out-dir", default="results")
    return ap

def run(name, args, out_dir):

    if args.config:
        cfg = ex.ExperimentConfig.load(args.config)
    else:
        cfg = ex.ExperimentConfig(name, list(range(args.seed, args.seed + args.seeds)), threads=args.threads)
    os.makedirs(out_dir, exist_ok=True)
    path = cfg.out or os.path.join(out_dir, f"{cfg.experiment}.csv")
    t0 = time.perf_counter()
    result = ex.run_experiment(cfg)
    ex.write_results(result, path, cfg)
    print(f"{cfg.experiment}: {len(result.rows)} rows in {time.perf_counter() - t0:.1f}s -> {path}")
    print(json.dumps(ex._jsonable(result.summary), indent=2))
    return result
