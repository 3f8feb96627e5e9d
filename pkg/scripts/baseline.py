"""Full-scale MNIST baseline: identity hash (plain MLP), no sparsity, 30 epochs."""
import argparse
import logging

from arbnets.experiments import ExperimentConfig, train_once
from arbnets.train import TrainConfig

logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

p = argparse.ArgumentParser()
p.add_argument("--data-dir", default="data/mnist")
p.add_argument("--epochs", type=int, default=30)
p.add_argument("--out", default=None)
args = p.parse_args()

config = ExperimentConfig(dataset="mnist", data_dir=args.data_dir, hash="identity", sparsities=[0.0],
                          seeds=[0], subset=None, train=TrainConfig(epochs=args.epochs), out=args.out)
row, history, _ = train_once(config, on_epoch=lambda r: logging.info(
    "epoch %(epoch)d lr=%(lr)g loss=%(train_loss).4f train_acc=%(train_acc).4f", r))
print(f"test accuracy {row.test_acc:.4f} after {row.epochs} epochs ({row.wall_time:.0f}s)")
