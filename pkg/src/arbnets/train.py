"""SGD with momentum, the plateau learning-rate schedule, and the epoch loop."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .arbnet import Network
from .errors import UsageError
from .numerics import RngStream


@dataclass
class TrainConfig:
    lr: float = 0.1
    momentum: float = 0.9
    lr_decay_factor: float = 0.1
    patience_epochs: int = 4
    epochs: int = 5
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if not self.lr >= 0:
            raise UsageError(f"lr must be >= 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise UsageError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 2:
            raise UsageError(f"batch_size must be >= 2 for batch norm, got {self.batch_size}")
        if self.epochs < 0 or self.patience_epochs < 1:
            raise UsageError("epochs must be >= 0 and patience_epochs >= 1")

    def to_dict(self):
        return asdict(self)


@dataclass
class SchedulerState:
    current_lr: float
    best_train_acc: float = float("-inf")
    epochs_since_improvement: int = 0


def sgd_momentum_step(values, grads, velocity, lr, momentum):
    """Classical momentum, in place: v <- momentum*v + g; w <- w - lr*v; then g <- 0."""
    velocity *= momentum
    velocity += grads
    values -= lr * velocity
    grads[...] = 0
    return values


def optimizer_step(net: Network, lr, momentum):
    # net.params() lists a shared table once, so each slot is updated once per step.
    for p in net.params():
        sgd_momentum_step(p.values, p.grads, p.velocity, p.values.dtype.type(lr), p.values.dtype.type(momentum))


def scheduler_update(state: SchedulerState, epoch_train_acc, decay_factor=0.1, patience=4):
    """Cut the learning rate by ``decay_factor`` after ``patience`` epochs without a new best."""
    if epoch_train_acc > state.best_train_acc:
        state.best_train_acc = epoch_train_acc
        state.epochs_since_improvement = 0
    else:
        state.epochs_since_improvement += 1
        if state.epochs_since_improvement >= patience:
            state.current_lr *= decay_factor
            state.epochs_since_improvement = 0
    return state.current_lr


def iter_batches(n, batch_size, stream: RngStream):
    order = stream.permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        if idx.size < 2:
            break
        yield idx


def train_epoch(net: Network, dataset, config: TrainConfig, stream: RngStream, lr=None):
    """One shuffled pass with an optimizer step per minibatch; returns (mean loss, accuracy)."""
    if dataset.num_samples == 0:
        raise UsageError("cannot train on an empty dataset")
    lr = config.lr if lr is None else lr
    net.train()
    net.zero_grads()
    total_loss, correct, seen = 0.0, 0, 0
    for idx in iter_batches(dataset.num_samples, config.batch_size, stream):
        x, y = dataset.images[idx], dataset.labels[idx]
        loss, logits = net.loss_and_grads(x, y)
        optimizer_step(net, lr, config.momentum)
        total_loss += loss * idx.size
        correct += int((logits.argmax(axis=1) == y).sum())
        seen += idx.size
    if seen == 0:
        raise UsageError("dataset too small to form a batch of 2")
    return total_loss / seen, correct / seen


def evaluate(net: Network, dataset, batch_size=1000):
    """Fraction of correct argmax predictions with batch norm in inference mode."""
    if dataset.num_samples == 0:
        raise UsageError("cannot evaluate on an empty dataset")
    was_training = net.training
    net.eval()
    try:
        correct = 0
        for start in range(0, dataset.num_samples, batch_size):
            x = dataset.images[start:start + batch_size]
            correct += int((net.predict(x) == dataset.labels[start:start + batch_size]).sum())
    finally:
        net.training = was_training
    return correct / dataset.num_samples


def train(net: Network, dataset, config: TrainConfig, stream: RngStream, on_epoch=None):
    """Run ``config.epochs`` epochs under the plateau schedule; returns per-epoch records."""
    sched = SchedulerState(current_lr=config.lr)
    history = []
    for epoch in range(config.epochs):
        lr = sched.current_lr
        loss, acc = train_epoch(net, dataset, config, stream.child(f"epoch{epoch}"), lr=lr)
        scheduler_update(sched, acc, config.lr_decay_factor, config.patience_epochs)
        record = {"epoch": epoch + 1, "lr": lr, "train_loss": loss, "train_acc": acc}
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
    return history
