"""Neighborhood radius 0 vs n/2 on desk-scale MNIST for several table sizes.

With 200-wide layers and n = 1000 the modulus hash gives rows j and j + 5 the
same slots; a table size coprime to the layer widths removes that repetition.
"""
import argparse

import numpy as np

from arbnets.experiments import ExperimentConfig, run_cell
from arbnets.train import TrainConfig

p = argparse.ArgumentParser()
p.add_argument("--data-dir", default="data/mnist")
p.add_argument("--table-sizes", default="1000,997")
p.add_argument("--sparsity", type=float, default=0.1)
p.add_argument("--seeds", default="0,1,2")
args = p.parse_args()
seeds = [int(s) for s in args.seeds.split(",")]

for n in (int(v) for v in args.table_sizes.split(",")):
    config = ExperimentConfig(dataset="mnist", data_dir=args.data_dir, table_size=n, seeds=seeds,
                              train=TrainConfig(epochs=5))
    means = {}
    for radius in (0, n // 2):
        means[radius] = np.mean([run_cell(config, "neighborhood", radius, args.sparsity, s)[0].test_acc
                                 for s in seeds])
    print(f"n={n}: radius 0 {means[0]:.4f}  radius {n // 2} {means[n // 2]:.4f}  "
          f"gap {100 * (means[0] - means[n // 2]):+.2f}pp")
