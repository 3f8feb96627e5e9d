"""Exit criteria for the package. Each test adds one PASS/FAIL line to the run summary.

The MNIST criteria (7, 8, 9) need the IDX files; see conftest.find_mnist.
"""
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arbnets.arbnet import build_network, softmax_cross_entropy
from arbnets.cli import main
from arbnets.experiments import ExperimentConfig, check_conv_equivalence, check_rnn_tying, run_cell
from arbnets.hashing import Assignment, HashSpec, build_assignment, usage_entropy
from arbnets.numerics import RngStream
from arbnets.train import TrainConfig

from conftest import ACCEPTANCE_LINES
from gradcheck import numeric_grad, rel_error


def record(number, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# ------------------------------------------------------------------ 1

_grad_worst = []


@settings(max_examples=25, deadline=None, derandomize=True)
@given(seed=st.integers(0, 2**32 - 1),
       spec=st.sampled_from([HashSpec.identity(), HashSpec.modulus(7), HashSpec.uniform(9),
                             HashSpec.dirichlet(8, 0.5), HashSpec.neighborhood(10, 3)]),
       sparsity=st.sampled_from([0.0, 0.3]))
def _gradient_property(seed, spec, sparsity):
    s = RngStream(seed, "c1")
    net = build_network((6, 5, 4, 3), spec, sparsity, stream=s, dtype=np.float64)
    for k, p in enumerate(net.params()):
        if p not in net.tables:
            p.values += 0.3 * s.child(f"p{k}").normal(p.values.size)
    x = s.child("x").normal((4, 6))
    y = s.child("y").integers(0, 2, 4)
    net.zero_grads()
    net.loss_and_grads(x, y)
    loss = lambda: softmax_cross_entropy(net.forward(x), y)[0]
    worst = max(rel_error(p.grads, numeric_grad(loss, p.values)) for p in net.params())
    _grad_worst.append(worst)
    assert worst < 1e-4


def test_c01_gradient_correctness():
    t0 = time.perf_counter()
    _grad_worst.clear()
    _gradient_property()
    elapsed = time.perf_counter() - t0
    worst = max(_grad_worst)
    record(1, worst < 1e-4 and elapsed < 10,
           f"worst relative error {worst:.2e} over {len(_grad_worst)} networks (< 1e-4), {elapsed:.1f}s (< 10s)")


# ------------------------------------------------------------------ 2

def test_c02_entropy_anchor():
    h = usage_entropy(Assignment(1000, np.arange(1000)))
    h_mod = usage_entropy(build_assignment(HashSpec.modulus(1000), 156_000))
    ok = abs(h - math.log(1000)) < 1e-6 and abs(h_mod - math.log(1000)) < 1e-6 and round(h, 4) == 6.9078 \
        and round(h, 2) == 6.91
    record(2, ok, f"H = {h:.7f} (ln 1000 within 1e-6, 4dp 6.9078, 2dp {h:.2f})")


# ------------------------------------------------------------------ 3

def test_c03_dirichlet_balance_monotone():
    t0 = time.perf_counter()
    alphas = [0.01, 0.1, 1, 10, 100]
    means = []
    for a in alphas:
        spec = HashSpec.dirichlet(1000, a)
        means.append(np.mean([usage_entropy(build_assignment(spec, 156_800, RngStream(seed, f"c3/{a}")))
                              for seed in range(20)]))
    elapsed = time.perf_counter() - t0
    ok = all(x < y for x, y in zip(means, means[1:])) and elapsed < 30
    record(3, ok, "mean entropies " + ", ".join(f"{a}:{m:.3f}" for a, m in zip(alphas, means))
           + f" strictly increasing, {elapsed:.1f}s (< 30s)")


# ------------------------------------------------------------------ 4

def test_c04_hash_limit_identities():
    identical = all(build_assignment(HashSpec.neighborhood(n, 0), 100_000, RngStream(1)) ==
                    build_assignment(HashSpec.modulus(n), 100_000) for n in (7, 1000))
    # an odd window 2r+1 cannot equal 2n; 2r+1 = 3n is the nearest window that
    # is a multiple of n, which is what makes each identifier's slot exactly uniform
    n, r, num_ids = 5, 7, 100_000
    a = build_assignment(HashSpec.neighborhood(n, r), num_ids, RngStream(4, "c4"))
    residue = np.arange(num_ids) % n
    worst_z = 0.0
    for res in range(n):
        slots = a.slots[residue == res]
        freq = np.bincount(slots, minlength=n) / slots.size
        se = math.sqrt((1 / n) * (1 - 1 / n) / slots.size)
        worst_z = max(worst_z, float(np.abs(freq - 1 / n).max() / se))
    record(4, identical and worst_z < 3,
           f"radius 0 == modulus bit-identical: {identical}; window 2r+1={2 * r + 1}=3n marginals "
           f"worst |z| = {worst_z:.2f} (< 3)")


# ------------------------------------------------------------------ 5

def test_c05_conv_equivalence():
    t0 = time.perf_counter()
    worst = 0.0
    s = RngStream(5, "c5")
    for f in (1, 2, 3, 5):
        for shape in ((5, 5), (8, 8), (11, 7), (16, 16)):
            rep = check_conv_equivalence((f, f), shape, 20, s.child(f"{f}/{shape}"))
            assert rep["active_positions"] == (shape[0] - f + 1) * (shape[1] - f + 1) * f * f
            worst = max(worst, rep["max_abs_error"])
    elapsed = time.perf_counter() - t0
    record(5, worst < 1e-6 and elapsed < 10, f"max abs error {worst:.2e} (< 1e-6), {elapsed:.1f}s (< 10s)")


# ------------------------------------------------------------------ 6

def test_c06_rnn_tying():
    rep = check_rnn_tying(8, 3, 10, RngStream(6, "c6"))
    tied = rep["modulus_max_diff"] == [0.0] * 10
    diverged = min(rep["identity_max_diff"]) > 0
    record(6, tied and diverged and rep["slot0_probe"],
           f"modulus layers identical at all 10 steps: {tied}; identity control diverges: {diverged}")


# ------------------------------------------------------------------ 7, 8: desk-scale MNIST trends

def desk_config(mnist_dir):
    return ExperimentConfig(dataset="mnist", data_dir=mnist_dir, table_size=1000, subset=10000,
                            train=TrainConfig(epochs=5), seeds=[0, 1, 2], sparsities=[0.1])


def mean_test_acc(config, kind, param, sparsity=0.1):
    accs = [run_cell(config, kind, param, sparsity, seed)[0].test_acc for seed in config.seeds]
    return float(np.mean(accs)), accs


@pytest.mark.slow
def test_c07_balance_trend(mnist_dir):
    t0 = time.perf_counter()
    config = desk_config(mnist_dir)
    high, _ = mean_test_acc(config, "dirichlet", 100.0)
    low, _ = mean_test_acc(config, "dirichlet", 0.01)
    elapsed = time.perf_counter() - t0
    gap = 100 * (high - low)
    record(7, gap > 2 and elapsed < 600,
           f"alpha=100 {high:.4f} vs alpha=0.01 {low:.4f}: +{gap:.2f}pp (> 2pp), {elapsed:.0f}s (< 600s)")


@pytest.mark.slow
def test_c08_noise_trend(mnist_dir):
    config = desk_config(mnist_dir)
    det, det_accs = mean_test_acc(config, "neighborhood", 0)
    noisy, noisy_accs = mean_test_acc(config, "neighborhood", 500)
    gap = 100 * (det - noisy)
    record(8, gap > 2, f"radius=0 {det:.4f} {np.round(det_accs, 4).tolist()} vs radius=500 {noisy:.4f} "
                       f"{np.round(noisy_accs, 4).tolist()}: {gap:+.2f}pp (> +2pp)")


# ------------------------------------------------------------------ 9

@pytest.mark.slow
def test_c09_baseline(mnist_dir):
    config = ExperimentConfig(dataset="mnist", data_dir=mnist_dir, hash="identity", sparsities=[0.0], seeds=[0],
                              subset=None, train=TrainConfig(epochs=30))
    from arbnets.experiments import train_once
    t0 = time.perf_counter()
    row, _, _ = train_once(config)
    record(9, row.test_acc > 0.95,
           f"identity hash, full MNIST, 30 epochs: test acc {row.test_acc:.4f} (> 0.95), "
           f"{time.perf_counter() - t0:.0f}s")


# ------------------------------------------------------------------ 10

def test_c10_determinism(tmp_path):
    fast = ["--dataset", "synthetic", "--epochs", "2", "--table-size", "50", "--seeds", "0,1"]
    commands = {
        "dirichlet-sweep": ["dirichlet-sweep", *fast, "--alphas", "0.1,10", "--sparsities", "0.1,0.5"],
        "neighborhood-sweep": ["neighborhood-sweep", *fast, "--radii", "0,7", "--sparsities", "0.1"],
        "train": ["train", *fast, "--hash", "uniform", "--sparsities", "0.3"],
        "heatmap": ["heatmap", "--alphas", "0.01,0.1,1,10,100", "--table-size", "1000"],
        "check-conv": ["check-conv", "--trials", "5"],
        "check-rnn": ["check-rnn"],
    }
    same = {}
    for name, argv in commands.items():
        outputs = []
        for k in range(2):
            out = tmp_path / f"{name}-{k}.csv"
            assert main([*argv, "--out", str(out)]) == 0
            outputs.append(out.read_bytes())
        same[name] = outputs[0] == outputs[1] and len(outputs[0]) > 0
    record(10, all(same.values()), "byte-identical CSV across two runs: "
           + ", ".join(f"{k}={'yes' if v else 'NO'}" for k, v in same.items()))
