"""Component ablations on the synthetic benchmark.

Sweeps one comparison axis at a time: swap both branches onto each alternate
pooling operator, restrict the task set, or share the latent token bank.
Defaults are sized down from the paradigm benchmark so a full pooling sweep
(7 variants x runs x folds) stays inside a coffee break.

    python3 scripts/run_ablations.py --axis pooling --out runs/ablate_pooling
"""

import argparse
import sys
import time

from slidegt.data import SyntheticSpec, generate
from slidegt.model import BranchConfig, ModelConfig
from slidegt.train import ABLATION_AXES, TrainConfig, format_summary, run_ablation


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--axis", choices=ABLATION_AXES, default="pooling")
    ap.add_argument("--samples", type=int, default=120)
    ap.add_argument("--epochs", type=int, default=8)
    ap.add_argument("--runs", type=int, default=1)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--data-seed", type=int, default=7)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args(argv)

    spec = SyntheticSpec(samples=args.samples, rows=16, cols=16, dim=32,
                         seed=args.data_seed, folds=args.folds)
    print(f"generating {args.samples} samples ...", flush=True)
    dataset = generate(spec)

    model = ModelConfig(
        input_dim=32, dim=32, gcn_layers=2, heads=2, transformer_depth=1,
        branches=(
            BranchConfig(task="typing", pooling="drop", tokens=16, pool_size=32),
            BranchConfig(task="staging", pooling="gcmincut", tokens=16,
                         pool_size=16),
        ))
    cfg = TrainConfig(model=model, epochs=args.epochs, batch_size=8,
                      lr=args.lr, seed=args.seed, folds=args.folds,
                      runs=args.runs, eval_drop_seeds=4, workers=args.workers)

    start = time.monotonic()
    results = run_ablation(cfg, dataset, args.axis, args.out)
    for name, report in results:
        print()
        print(format_summary(report["summary"], title=f"variant: {name}"))
    print(f"\n{len(results)} variants in {time.monotonic() - start:.0f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
