"""Planted-signal benchmark: multi-task vs single-task paradigms.

Generates the 200-slide synthetic benchmark (16x16 grids, 32-wide features),
trains the two-branch model plus both single-task restrictions under 5-fold
CV, and prints one summary table per paradigm.  With default settings the
whole sweep takes a few minutes on one core.

    python3 scripts/run_benchmark.py --out runs/benchmark
"""

import argparse
import sys
import time
from pathlib import Path

from slidegt.data import SyntheticSpec, generate
from slidegt.model import BranchConfig, ModelConfig
from slidegt.train import PARADIGMS, TrainConfig, format_summary, run_training


def benchmark_spec(args):
    return SyntheticSpec(samples=args.samples, rows=16, cols=16, dim=32,
                         seed=args.data_seed, folds=args.folds)


def benchmark_config(args, paradigm):
    model = ModelConfig(
        input_dim=32, dim=32, gcn_layers=2, heads=2, transformer_depth=1,
        branches=(
            BranchConfig(task="typing", pooling="drop", tokens=16, pool_size=32),
            BranchConfig(task="staging", pooling="gcmincut", tokens=16,
                         pool_size=16),
        ))
    return TrainConfig(model=model, epochs=args.epochs, batch_size=8,
                       lr=args.lr, seed=args.seed, folds=args.folds,
                       runs=args.runs, paradigm=paradigm, eval_drop_seeds=4,
                       workers=args.workers)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--runs", type=int, default=3)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--data-seed", type=int, default=7)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=None, help="artifact directory root")
    args = ap.parse_args(argv)

    print(f"generating {args.samples} samples ...", flush=True)
    dataset = generate(benchmark_spec(args))

    staging_acc = {}
    for paradigm in PARADIGMS:
        cfg = benchmark_config(args, paradigm)
        out_dir = (Path(args.out) / paradigm.replace(":", "_")
                   if args.out else None)
        start = time.monotonic()
        report = run_training(cfg, dataset, out_dir)
        elapsed = time.monotonic() - start
        print()
        print(format_summary(report["summary"],
                             title=f"{paradigm} ({elapsed:.0f}s)"))
        if "staging" in report["summary"]:
            staging_acc[paradigm] = report["summary"]["staging"]["acc_mean"]

    if {"multi", "single:stage"} <= set(staging_acc):
        delta = staging_acc["multi"] - staging_acc["single:stage"]
        print(f"\nstaging acc, multi minus single: {delta:+.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
