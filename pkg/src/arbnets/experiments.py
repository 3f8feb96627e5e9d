"""Hash sweeps, equivalence checks and their result files."""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .arbnet import build_network
from .data import Dataset, load_dataset, make_synthetic, split_stratified, subset
from .errors import UsageError
from .hashing import (HashSpec, atomic_write_text, conv_toeplitz_assignment, materialize,
                      write_assignment)
from .numerics import RngStream, matmul, sample_dirichlet
from .train import TrainConfig, evaluate, optimizer_step, train

log = logging.getLogger(__name__)

EXPERIMENTS = ("dirichlet_sweep", "neighborhood_sweep", "heatmap", "check_conv", "check_rnn", "train_once")

ARCHITECTURES = {
    "mnist": (784, 200, 200, 10),
    "cifar10": (3072, 2000, 2000, 2000, 2000, 2000, 10),
}

# Synthetic stand-in for quick runs: 4 separated blobs in 32 dimensions.
SYNTH_CLASSES, SYNTH_DIM, SYNTH_PER_CLASS, SYNTH_SEPARATION = 4, 32, 300, 8.0


@dataclass
class ExperimentConfig:
    experiment: str = "train_once"
    dataset: str = "synthetic"
    data_dir: str = "data/mnist"
    hash: str = "identity"
    alphas: list = field(default_factory=lambda: [0.01, 0.1, 1.0, 10.0, 100.0])
    radii: list = field(default_factory=lambda: [0, 10, 100, 500])
    sparsities: list = field(default_factory=lambda: [0.1, 0.5, 0.9])
    table_size: int = 1000
    scope: str = "per_layer"
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    train: TrainConfig = field(default_factory=TrainConfig)
    subset: int | None = 10000
    out: str | None = None
    format: str = "csv"
    workers: int = 1
    assignment_dir: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise UsageError(f"experiment must be one of {EXPERIMENTS}")
        for name in ("alphas", "radii", "sparsities", "seeds"):
            if not getattr(self, name):
                raise UsageError(f"{name}: parameter list must not be empty")
        if any(not 0 <= s < 1 for s in self.sparsities):
            raise UsageError("sparsities must lie in [0, 1)")
        if self.format not in ("csv", "json"):
            raise UsageError("format must be csv or json")

    def to_dict(self):
        return asdict(self)


@dataclass
class ResultRow:
    experiment: str
    dataset: str
    hash_kind: str
    hash_param: float
    sparsity: float
    seed: int
    table_size: int
    entropy: float
    train_acc: float
    test_acc: float
    epochs: int
    wall_time: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if not 0 <= self.train_acc <= 1 or not 0 <= self.test_acc <= 1:
            raise UsageError("accuracies must lie in [0, 1]")
        if not -1e-12 <= self.entropy <= math.log(self.table_size) + 1e-9:
            raise UsageError(f"entropy {self.entropy} outside [0, ln {self.table_size}]")


CSV_FIELDS = [f.name for f in fields(ResultRow) if f.name != "wall_time"]
_FIELD_TYPES = {"experiment": str, "dataset": str, "hash_kind": str, "hash_param": float,
                "sparsity": float, "seed": int, "table_size": int, "entropy": float,
                "train_acc": float, "test_acc": float, "epochs": int, "wall_time": float}


# ---------------------------------------------------------------- result files

def rows_to_csv(rows) -> str:
    # wall time stays out of the CSV so identical runs give identical bytes
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, k) for k in CSV_FIELDS)])
    return buf.getvalue()


def rows_from_csv(text: str):
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_FIELDS:
        raise UsageError(f"unexpected CSV header {reader.fieldnames}")
    return [ResultRow(**{k: _FIELD_TYPES[k](v) for k, v in rec.items()}) for rec in reader]


def rows_to_json(rows, config=None, extra=None) -> str:
    doc = {"rows": [asdict(r) for r in rows]}
    if config is not None:
        doc["config"] = config.to_dict()
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def rows_from_json(text: str):
    return [ResultRow(**{k: _FIELD_TYPES[k](v) for k, v in rec.items()}) for rec in json.loads(text)["rows"]]


def write_results(rows, config: ExperimentConfig, extra=None):
    """Write rows to ``config.out`` (CSV plus a ``.json`` sidecar, or a single JSON file)."""
    if config.out is None:
        return
    sidecar = {"wall_time": [r.wall_time for r in rows], **(extra or {})}
    if config.format == "csv":
        atomic_write_text(config.out, rows_to_csv(rows))
        atomic_write_text(config.out + ".json", rows_to_json([], config, sidecar))
    else:
        atomic_write_text(config.out, rows_to_json(rows, config, extra))


def read_results(path):
    with open(path) as f:
        text = f.read()
    return rows_from_json(text) if text.lstrip().startswith("{") else rows_from_csv(text)


# ---------------------------------------------------------------- single cells

def load_splits(config: ExperimentConfig, seed: int):
    """(train, test) for the configured dataset, the training side subset with ``seed``."""
    if config.dataset == "synthetic":
        full = make_synthetic(RngStream(0, "synthetic"), SYNTH_PER_CLASS, SYNTH_CLASSES, SYNTH_DIM,
                              SYNTH_SEPARATION)
        test_idx = split_stratified(full.labels, full.num_samples // 3, RngStream(0, "synthetic/split"))
        keep = np.ones(full.num_samples, dtype=bool)
        keep[test_idx] = False
        train_set, test_set = full.take(np.flatnonzero(keep), "synthetic"), full.take(test_idx, "synthetic-test")
    else:
        train_set, test_set = _cached_dataset(config.dataset, config.data_dir)
    if config.subset is not None and config.subset < train_set.num_samples:
        train_set = subset(train_set, config.subset, RngStream(seed, "subset"))
    return train_set, test_set


_DATA_CACHE: dict = {}


def _cached_dataset(name, data_dir):
    key = (name, os.path.abspath(data_dir))
    if key not in _DATA_CACHE:
        _DATA_CACHE[key] = load_dataset(name, data_dir)
    return _DATA_CACHE[key]


def architecture(config: ExperimentConfig, train_set: Dataset):
    if config.dataset == "synthetic":
        return (train_set.feature_dim, 64, 64, train_set.num_classes)
    return ARCHITECTURES[config.dataset]


def make_spec(kind, param, table_size) -> HashSpec:
    if kind == "identity":
        return HashSpec.identity()
    if kind == "modulus":
        return HashSpec.modulus(table_size)
    if kind == "uniform":
        return HashSpec.uniform(table_size)
    if kind == "dirichlet":
        return HashSpec.dirichlet(table_size, param)
    if kind == "neighborhood":
        return HashSpec.neighborhood(table_size, int(param))
    raise UsageError(f"hash kind {kind!r} cannot be used for an MLP")


def run_cell(config: ExperimentConfig, kind, param, sparsity, seed, return_network=False):
    """Build, train and evaluate one network; returns ``(row, history)`` (and the network)."""
    t0 = time.perf_counter()
    train_set, test_set = load_splits(config, seed)
    spec = make_spec(kind, param, config.table_size)
    net = build_network(architecture(config, train_set), spec, sparsity, config.scope, RngStream(seed, "network"))
    entropies = net.table_entropies()
    tcfg = TrainConfig(**{**config.train.to_dict(), "seed": seed})
    history = train(net, train_set, tcfg, RngStream(seed, "train"))
    test_acc = evaluate(net, test_set)
    train_acc = history[-1]["train_acc"] if history else evaluate(net, train_set)
    table_size = max(t.table_size for t in net.tables)
    row = ResultRow(config.experiment, config.dataset, kind, float(param if param is not None else 0.0),
                    float(sparsity), int(seed), table_size, float(np.mean(entropies)), float(train_acc),
                    float(test_acc), len(history), time.perf_counter() - t0)
    if config.assignment_dir:
        os.makedirs(config.assignment_dir, exist_ok=True)
        for k, layer in enumerate(net.linears):
            name = f"{config.experiment}_{kind}{param}_s{sparsity}_seed{seed}_layer{k}.txt"
            write_assignment(layer.active_assignment(), os.path.join(config.assignment_dir, name))
    log.info("%s %s=%s sparsity=%s seed=%s entropy=%.4f test_acc=%.4f (%.1fs)", config.experiment, kind,
             param, sparsity, seed, row.entropy, test_acc, row.wall_time)
    if return_network:
        return row, history, net
    return row, history


def _run_cell_args(args):
    return run_cell(*args)


def run_grid(config: ExperimentConfig, kind, params):
    """Every (param, sparsity, seed) cell, in grid order whatever the completion order."""
    cells = [(config, kind, p, s, seed)
             for p, s, seed in itertools.product(params, config.sparsities, config.seeds)]
    if config.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_cell_args, cells))
    else:
        results = [run_cell(*c) for c in cells]
    return [r for r, _ in results], [h for _, h in results]


def run_dirichlet_sweep(config: ExperimentConfig):
    rows, histories = run_grid(config, "dirichlet", config.alphas)
    write_results(rows, config, {"epochs": histories})
    return rows


def run_neighborhood_sweep(config: ExperimentConfig):
    rows, histories = run_grid(config, "neighborhood", config.radii)
    write_results(rows, config, {"epochs": histories})
    return rows


def train_once(config: ExperimentConfig, on_epoch=None):
    """One build-train-evaluate cycle using the first entry of each parameter list."""
    param = {"dirichlet": config.alphas[0], "neighborhood": config.radii[0]}.get(config.hash)
    t0 = time.perf_counter()
    train_set, test_set = load_splits(config, config.seeds[0])
    spec = make_spec(config.hash, param, config.table_size)
    seed = config.seeds[0]
    net = build_network(architecture(config, train_set), spec, config.sparsities[0], config.scope,
                        RngStream(seed, "network"))
    entropies = net.table_entropies()
    tcfg = TrainConfig(**{**config.train.to_dict(), "seed": seed})
    history = train(net, train_set, tcfg, RngStream(seed, "train"), on_epoch=on_epoch)
    row = ResultRow("train_once", config.dataset, config.hash, float(param or 0.0), float(config.sparsities[0]),
                    int(seed), max(t.table_size for t in net.tables), float(np.mean(entropies)),
                    float(history[-1]["train_acc"] if history else evaluate(net, train_set)),
                    float(evaluate(net, test_set)), len(history), time.perf_counter() - t0)
    write_results([row], config, {"epochs": [history]})
    return row, history, net


# ---------------------------------------------------------------- heatmap

def heatmap_rows(alphas, n, stream: RngStream):
    return [sample_dirichlet(stream.child(f"alpha={a!r}"), a, n) for a in alphas]


def emit_heatmap_data(alphas, n, stream: RngStream, out):
    """One Dirichlet draw per alpha, written as a headerless CSV row of ``n`` probabilities."""
    if n < 1:
        raise UsageError(f"n must be >= 1, got {n}")
    rows = heatmap_rows(alphas, n, stream)
    text = "".join(",".join(repr(float(v)) for v in row) + "\n" for row in rows)
    atomic_write_text(out, text)
    return rows


# ---------------------------------------------------------------- equivalence checks

def direct_convolution(image, kernel):
    """Valid, stride-1 sliding-window product: out[p, q] = sum_ab kernel[a, b] * image[p + a, q + b]."""
    fh, fw = kernel.shape
    oh, ow = image.shape[0] - fh + 1, image.shape[1] - fw + 1
    out = np.zeros((oh, ow), dtype=np.result_type(image, kernel))
    for p in range(oh):
        for q in range(ow):
            out[p, q] = (kernel * image[p:p + fh, q:q + fw]).sum()
    return out


def check_conv_equivalence(filter_shape, input_shape, trials, stream: RngStream):
    """Compare the unrolled-matrix product against direct convolution on random data."""
    fh, fw = filter_shape
    ih, iw = input_shape
    assignment, rows, cols = conv_toeplitz_assignment(fh, fw, ih, iw)
    worst = 0.0
    for t in range(trials):
        s = stream.child(f"trial{t}")
        kernel = s.normal((fh, fw))
        image = s.normal((ih, iw))
        w = materialize(assignment, kernel.ravel(), (rows, cols))
        via_matrix = matmul(w, image.reshape(-1, 1)).reshape(ih - fh + 1, iw - fw + 1)
        worst = max(worst, float(np.abs(via_matrix - direct_convolution(image, kernel)).max()))
    return {
        "filter": f"{fh}x{fw}", "input": f"{ih}x{iw}", "trials": trials,
        "active_positions": assignment.num_ids, "distinct_slots": int(np.unique(assignment.slots).size),
        "max_abs_error": worst, "passed": worst < 1e-6,
    }


def check_rnn_tying(layer_width, depth, steps, stream: RngStream, batch_size=16):
    """Train a network-wide modulus-hash stack and an identity-hash control side by side.

    Returns a report with the per-step maximum pairwise difference between the
    layers' materialized weight matrices for both variants.
    """
    if depth < 2:
        raise UsageError(f"depth must be >= 2, got {depth}")
    arch = (layer_width,) * (depth + 1)
    data = make_synthetic(stream.child("data"), 4 * batch_size, layer_width, layer_width, 4.0)
    report = {"width": layer_width, "depth": depth, "steps": steps}
    for variant, spec in (("modulus", HashSpec.modulus(layer_width * layer_width)),
                          ("identity", HashSpec.identity())):
        net = build_network(arch, spec, 0.0, "global", stream.child("net"), dtype=np.float64)
        diffs = []
        batches = stream.child(f"{variant}/batches")
        for _ in range(steps):
            idx = batches.permutation(data.num_samples)[:batch_size]
            net.loss_and_grads(data.images[idx], data.labels[idx])
            optimizer_step(net, 0.1, 0.9)
            ws = net.weights()
            diffs.append(max(float(np.abs(a - b).max()) for a, b in itertools.combinations(ws, 2)))
        report[f"{variant}_max_diff"] = diffs
    net = build_network(arch, HashSpec.modulus(layer_width * layer_width), 0.0, "global", stream.child("net"))
    before = net.weights()
    net.tables[0].values[0] += 1.0
    after = net.weights()
    probe = all(a[0, 0] != b[0, 0] and np.count_nonzero(a != b) == 1 for a, b in zip(before, after))
    report["slot0_probe"] = probe
    report["passed"] = (max(report["modulus_max_diff"], default=0.0) == 0.0
                        and min(report["identity_max_diff"], default=1.0) > 0.0 and probe)
    return report
