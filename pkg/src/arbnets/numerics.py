"""Seeded random streams and the few numeric primitives the rest of the package uses.

Every stochastic choice in the package (hash assignments, masks, initial
weights, minibatch order) draws from an :class:`RngStream`.  A stream is
identified by a 64-bit seed plus a text label; the pair is hashed into a
numpy ``SeedSequence`` driving a PCG64 generator, so the same pair always
produces the same numbers and different labels give independent streams.
"""
from __future__ import annotations

import hashlib
import math

import numpy as np

from .errors import DivergentDensityError, UsageError

_SMALLEST_POSITIVE = np.finfo(np.float64).smallest_subnormal


def _label_key(label: str) -> tuple[int, ...]:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=16).digest()
    return tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))


class RngStream:
    """Deterministic PCG64 stream keyed by ``(seed, label)``.

    Streams are single-owner: do not share one between threads or processes,
    derive a :meth:`child` instead.
    """

    def __init__(self, seed: int, label: str = "root"):
        if not 0 <= int(seed) < 2**64:
            raise UsageError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.label = label
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=_label_key(label))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, label: str) -> "RngStream":
        # Depends only on (seed, path), never on how much the parent has been consumed.
        return RngStream(self.seed, f"{self.label}/{label}")

    def uniform(self, size=None):
        return self.generator.random(size)

    def open_uniform(self, size=None):
        """Uniform draws on (0, 1], safe to take the log of."""
        return 1.0 - self.generator.random(size)

    def normal(self, size=None, scale: float = 1.0):
        return self.generator.normal(0.0, scale, size)

    def integers(self, low: int, high: int, size=None):
        """Integers on the inclusive range [low, high]."""
        return self.generator.integers(low, high, size=size, endpoint=True)

    def permutation(self, n: int):
        return self.generator.permutation(n)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, label={self.label!r})"


def matmul(a, b):
    """Matrix product with an explicit shape check."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise UsageError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def log_gamma_variates(stream: RngStream, shape: float, size: int) -> np.ndarray:
    """Logarithms of ``size`` Gamma(shape, 1) draws.

    Marsaglia-Tsang squeeze/rejection for shape >= 1.  For shape < 1 the draw
    is made at shape + 1 and boosted by U**(1/shape), added in log space so
    that shapes like 0.01 never underflow before normalisation.
    """
    if not shape > 0:
        raise UsageError(f"gamma shape must be > 0, got {shape}")
    boost = shape < 1.0
    a = shape + 1.0 if boost else float(shape)
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)

    out = np.empty(size, dtype=np.float64)
    todo = np.arange(size)
    while todo.size:
        x = stream.normal(todo.size)
        v = (1.0 + c * x) ** 3
        u = stream.open_uniform(todo.size)
        ok = v > 0
        logv = np.log(np.where(ok, v, 1.0))
        ok &= np.log(u) < 0.5 * x * x + d - d * v + d * logv
        out[todo[ok]] = math.log(d) + logv[ok]
        todo = todo[~ok]
    if boost:
        out += np.log(stream.open_uniform(size)) / shape
    return out


def sample_gamma(stream: RngStream, shape: float) -> float:
    """One Gamma(shape, scale=1) draw.

    Values below the smallest positive double are returned as that double so
    the result is always strictly positive.
    """
    lg = log_gamma_variates(stream, shape, 1)[0]
    return float(max(math.exp(lg) if lg > -745.0 else 0.0, _SMALLEST_POSITIVE))


def sample_dirichlet(stream: RngStream, alpha: float, n: int) -> np.ndarray:
    """One draw from the symmetric Dirichlet(alpha) on ``n`` components."""
    if n < 1:
        raise UsageError(f"dirichlet needs n >= 1, got {n}")
    if not alpha > 0:
        raise UsageError(f"dirichlet alpha must be > 0, got {alpha}")
    lg = log_gamma_variates(stream, alpha, n)
    p = np.exp(lg - lg.max())
    return p / p.sum()


def dirichlet_log_density(x, alpha: float) -> float:
    """Log density of the symmetric Dirichlet at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if not alpha > 0:
        raise UsageError(f"dirichlet alpha must be > 0, got {alpha}")
    if x.ndim != 1 or x.size < 1 or np.any(x < 0) or abs(x.sum() - 1.0) > 1e-9:
        raise UsageError("x must be a probability vector")
    n = x.size
    norm = math.lgamma(alpha * n) - n * math.lgamma(alpha)
    if alpha == 1.0:
        return norm
    if np.any(x == 0):
        if alpha < 1.0:
            raise DivergentDensityError(f"density diverges at a zero component for alpha={alpha} < 1")
        return -math.inf
    return norm + (alpha - 1.0) * float(np.log(x).sum())


def _check_probabilities(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0):
        raise UsageError("p must be a non-empty vector of non-negative probabilities")
    total = p.sum()
    if abs(total - 1.0) > 1e-6:
        raise UsageError(f"probabilities sum to {total}, not 1")
    return p


def sample_categorical(stream: RngStream, p, size=None):
    """Index ``i`` with probability ``p[i]``; an int, or an array when ``size`` is given."""
    p = _check_probabilities(p)
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    cdf[-1] = 1.0
    u = stream.uniform(size)
    idx = np.searchsorted(cdf, u, side="right")
    if size is None:
        return int(idx)
    return idx.astype(np.int64)
