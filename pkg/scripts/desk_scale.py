"""Desk-scale MNIST sweeps: Dirichlet alphas and neighborhood radii, with a mean-accuracy table.

    python scripts/desk_scale.py --data-dir data/mnist --out-dir results/
"""
import argparse
import os
from collections import defaultdict

import numpy as np

from arbnets.experiments import ExperimentConfig, run_dirichlet_sweep, run_neighborhood_sweep
from arbnets.train import TrainConfig


def summarise(rows, label):
    cells = defaultdict(list)
    for r in rows:
        cells[(r.hash_param, r.sparsity)].append((r.test_acc, r.entropy))
    print(f"\n{label}: mean test accuracy (mean entropy) over seeds")
    for (param, sparsity), vals in sorted(cells.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        acc, ent = np.mean(vals, axis=0)
        print(f"  sparsity={sparsity:<4} param={param:<8g} acc={acc:.4f} entropy={ent:.3f}")


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--data-dir", default="data/mnist")
    p.add_argument("--out-dir", default="results")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--subset", type=int, default=10000)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)
    seeds = [int(s) for s in args.seeds.split(",")]

    common = dict(dataset="mnist", data_dir=args.data_dir, seeds=seeds, subset=args.subset,
                  train=TrainConfig(epochs=args.epochs), workers=args.workers)
    rows = run_dirichlet_sweep(ExperimentConfig(experiment="dirichlet_sweep",
                                                out=os.path.join(args.out_dir, "dirichlet.csv"), **common))
    summarise(rows, "dirichlet")
    rows = run_neighborhood_sweep(ExperimentConfig(experiment="neighborhood_sweep",
                                                   out=os.path.join(args.out_dir, "neighborhood.csv"), **common))
    summarise(rows, "neighborhood")


if __name__ == "__main__":
    main()
