import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arbnets.errors import DivergentDensityError, UsageError
from arbnets.numerics import (RngStream, dirichlet_log_density, log_gamma_variates, matmul,
                              sample_categorical, sample_dirichlet, sample_gamma)


def triple_loop(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def test_matmul_identity_and_scalar():
    m = np.arange(12.0).reshape(3, 4)
    assert np.array_equal(matmul(np.eye(3), m), m)
    assert matmul([[2.0]], [[3.0]])[0, 0] == 6.0


def test_matmul_matches_triple_loop():
    s = RngStream(1, "mm")
    a, b = s.normal((4, 5)), s.normal((5, 3))
    assert np.abs(matmul(a, b) - triple_loop(a, b)).max() < 1e-12


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(UsageError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_streams_reproducible_and_label_dependent():
    a = RngStream(7, "x").uniform(5)
    assert np.array_equal(a, RngStream(7, "x").uniform(5))
    assert not np.array_equal(a, RngStream(7, "y").uniform(5))
    assert not np.array_equal(a, RngStream(8, "x").uniform(5))


def test_child_ignores_parent_consumption():
    p = RngStream(3)
    first = p.child("c").uniform(4)
    p.uniform(100)
    assert np.array_equal(first, p.child("c").uniform(4))


def test_distinct_labels_uncorrelated():
    a = RngStream(5, "a").normal(20000)
    b = RngStream(5, "b").normal(20000)
    # |r| for independent streams is ~ 1/sqrt(n) = 0.007
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.03


def test_seed_range_checked():
    with pytest.raises(UsageError):
        RngStream(-1)
    with pytest.raises(UsageError):
        RngStream(2**64)


def test_gamma_shape_one_is_exponential():
    x = np.exp(log_gamma_variates(RngStream(11, "g1"), 1.0, 100_000))
    assert abs((x > 1).mean() - math.exp(-1)) < 0.01


def test_gamma_shape_two_mean():
    x = np.exp(log_gamma_variates(RngStream(12, "g2"), 2.0, 100_000))
    assert abs(x.mean() - 2.0) < 0.02


def test_gamma_small_shape_positive_and_finite():
    s = RngStream(13, "g001")
    draws = [sample_gamma(s, 0.01) for _ in range(2000)]
    assert all(d > 0 and math.isfinite(d) for d in draws)


@pytest.mark.parametrize("shape", [0.3, 0.5, 3.0])
def test_gamma_mean_and_variance(shape):
    # Gamma(k, 1): mean k, variance k
    x = np.exp(log_gamma_variates(RngStream(14, f"g{shape}"), shape, 200_000))
    assert abs(x.mean() - shape) < 4 * math.sqrt(shape / 200_000)
    assert abs(x.var() - shape) < 0.05 * shape


@pytest.mark.parametrize("shape", [0.0, -1.0])
def test_gamma_rejects_nonpositive_shape(shape):
    with pytest.raises(UsageError):
        sample_gamma(RngStream(0), shape)


def test_dirichlet_degenerate_and_concentrated():
    assert sample_dirichlet(RngStream(0), 0.3, 1).tolist() == [1.0]
    p = sample_dirichlet(RngStream(1), 1e6, 1000)
    assert np.abs(p - 0.001).max() < 1e-3


def test_dirichlet_symmetric_mean():
    s = RngStream(2, "dm")
    draws = np.array([sample_dirichlet(s, 1.0, 3) for _ in range(10_000)])
    assert np.abs(draws.mean(axis=0) - 1 / 3).max() < 0.01


def test_dirichlet_component_variance():
    # Var(x_i) = (N-1) / (N^2 (N alpha + 1)) for the symmetric Dirichlet
    alpha, n = 0.5, 4
    s = RngStream(3, "dv")
    draws = np.array([sample_dirichlet(s, alpha, n) for _ in range(20_000)])
    expected = (n - 1) / (n * n * (n * alpha + 1))
    assert np.abs(draws.var(axis=0) / expected - 1).max() < 0.05


@pytest.mark.parametrize("alpha", [0.01, 0.1, 1, 10, 100, 1e6])
@pytest.mark.parametrize("n", [1, 2, 10, 1000])
def test_dirichlet_on_simplex(alpha, n):
    p = sample_dirichlet(RngStream(4, f"{alpha}/{n}"), alpha, n)
    assert p.shape == (n,)
    assert (p >= 0).all()
    assert abs(p.sum() - 1) < 1e-9


@pytest.mark.parametrize("alpha,n", [(0, 3), (-1, 3), (1, 0)])
def test_dirichlet_rejects_bad_args(alpha, n):
    with pytest.raises(UsageError):
        sample_dirichlet(RngStream(0), alpha, n)


def test_dirichlet_replay_bit_identical():
    a = [sample_dirichlet(RngStream(9, "r"), 0.01, 50) for _ in range(3)]
    b = [sample_dirichlet(RngStream(9, "r"), 0.01, 50) for _ in range(3)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_log_density_analytic_values():
    assert dirichlet_log_density([0.3, 0.7], 1.0) == pytest.approx(0.0, abs=1e-12)
    assert dirichlet_log_density([0.2, 0.5, 0.3], 1.0) == pytest.approx(math.log(2), abs=1e-12)
    assert dirichlet_log_density([0.5, 0.5], 2.0) == pytest.approx(math.log(1.5), abs=1e-12)


def test_log_density_matches_scipy():
    from scipy.stats import dirichlet
    x = np.array([0.1, 0.2, 0.3, 0.4])
    for alpha in (0.5, 1.5, 7.0):
        assert dirichlet_log_density(x, alpha) == pytest.approx(dirichlet.logpdf(x, [alpha] * 4), rel=1e-10)


def test_log_density_divergent_at_zero():
    with pytest.raises(DivergentDensityError):
        dirichlet_log_density([0.0, 1.0], 0.5)


@settings(max_examples=30, deadline=None)
@given(alpha=st.sampled_from([1.0, 2.0, 10.0, 100.0]), n=st.integers(2, 50), seed=st.integers(0, 2**32))
def test_log_density_finite_on_draws(alpha, n, seed):
    p = sample_dirichlet(RngStream(seed), alpha, n)
    if (p > 0).all():
        assert math.isfinite(dirichlet_log_density(p, alpha))


def test_categorical_point_masses():
    s = RngStream(0, "cat")
    assert {sample_categorical(s, [1, 0, 0]) for _ in range(200)} == {0}
    assert {sample_categorical(s, [0, 0, 1]) for _ in range(200)} == {2}


def test_categorical_frequency():
    draws = sample_categorical(RngStream(1, "cat"), [0.5, 0.5], size=100_000)
    assert abs((draws == 0).mean() - 0.5) < 0.01


def test_categorical_rejects_unnormalised():
    with pytest.raises(UsageError):
        sample_categorical(RngStream(0), [0.5, 0.6])
