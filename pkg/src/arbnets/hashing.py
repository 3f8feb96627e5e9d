"""Identifier-to-slot assignments for each hash family, and their balance."""
from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .numerics import RngStream, sample_categorical, sample_dirichlet

HASH_KINDS = ("identity", "modulus", "uniform", "dirichlet", "neighborhood", "conv_toeplitz")


@dataclass(frozen=True)
class HashSpec:
    """Which hash family builds an assignment, plus its parameters.

    Use the classmethod constructors rather than filling fields by hand.
    """
    kind: str
    n: int | None = None
    alpha: float | None = None
    radius: int | None = None
    filter_shape: tuple[int, int] | None = None
    input_shape: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in HASH_KINDS:
            raise UsageError(f"kind: unknown hash kind {self.kind!r}")
        if self.kind in ("modulus", "uniform", "dirichlet", "neighborhood"):
            if self.n is None or int(self.n) != self.n or self.n < 1:
                raise UsageError(f"n: table size must be an integer >= 1, got {self.n}")
        if self.kind == "dirichlet" and (self.alpha is None or not self.alpha > 0):
            raise UsageError(f"alpha: must be > 0, got {self.alpha}")
        if self.kind == "neighborhood" and (self.radius is None or int(self.radius) != self.radius
                                            or self.radius < 0):
            raise UsageError(f"radius: must be an integer >= 0, got {self.radius}")
        if self.kind == "conv_toeplitz":
            if self.filter_shape is None or self.input_shape is None:
                raise UsageError("filter_shape/input_shape: both required for conv_toeplitz")
            _check_conv_dims(*self.filter_shape, *self.input_shape)

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def modulus(cls, n):
        return cls("modulus", n=n)

    @classmethod
    def uniform(cls, n):
        return cls("uniform", n=n)

    @classmethod
    def dirichlet(cls, n, alpha):
        return cls("dirichlet", n=n, alpha=float(alpha))

    @classmethod
    def neighborhood(cls, n, radius):
        return cls("neighborhood", n=n, radius=radius)

    @classmethod
    def conv_toeplitz(cls, filter_h, filter_w, in_h, in_w):
        return cls("conv_toeplitz", filter_shape=(filter_h, filter_w), input_shape=(in_h, in_w))

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in self.__dict__.items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "HashSpec":
        d = dict(d)
        for k in ("filter_shape", "input_shape"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Assignment:
    """Maps identifiers to table slots.

    ``slots[k]`` is the slot of identifier ``ids[k]``.  When ``ids`` is left
    out the identifiers are ``0 .. len(slots) - 1``.
    """
    table_size: int
    slots: np.ndarray
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        slots = np.asarray(self.slots, dtype=np.int64)
        ids = np.arange(slots.size, dtype=np.int64) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if slots.ndim != 1 or ids.shape != slots.shape:
            raise UsageError("slots and ids must be 1-D and of equal length")
        if self.table_size < 1:
            raise UsageError(f"table_size must be >= 1, got {self.table_size}")
        if slots.size and (slots.min() < 0 or slots.max() >= self.table_size):
            raise UsageError("slot index out of range for table_size")
        slots.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "slots", slots)
        object.__setattr__(self, "ids", ids)

    @property
    def num_ids(self) -> int:
        return int(self.slots.size)

    @property
    def usage_counts(self) -> np.ndarray:
        return np.bincount(self.slots, minlength=self.table_size)

    def restrict(self, keep) -> "Assignment":
        """Sub-assignment over the positions selected by a boolean mask or index array."""
        return Assignment(self.table_size, self.slots[keep], self.ids[keep])

    def __eq__(self, other):
        if not isinstance(other, Assignment):
            return NotImplemented
        return (self.table_size == other.table_size and np.array_equal(self.slots, other.slots)
                and np.array_equal(self.ids, other.ids))


def _check_conv_dims(filter_h, filter_w, in_h, in_w):
    for name, v in (("filter_h", filter_h), ("filter_w", filter_w), ("in_h", in_h), ("in_w", in_w)):
        if int(v) != v or v < 1:
            raise UsageError(f"{name}: must be an integer >= 1, got {v}")
    if filter_h > in_h or filter_w > in_w:
        raise UsageError(f"filter {filter_h}x{filter_w} larger than input {in_h}x{in_w}")


def build_assignment(spec: HashSpec, num_ids: int, stream: RngStream | None = None) -> Assignment:
    """Assign identifiers ``0 .. num_ids - 1`` to slots with the family in ``spec``.

    The random families consume ``stream``; identity and modulus ignore it.
    For ``conv_toeplitz`` the identifier set comes from the dims and
    ``num_ids`` is ignored.
    """
    if spec.kind == "conv_toeplitz":
        return conv_toeplitz_assignment(*spec.filter_shape, *spec.input_shape)[0]
    if int(num_ids) != num_ids or num_ids < 1:
        raise UsageError(f"num_ids: must be >= 1, got {num_ids}")
    ids = np.arange(num_ids, dtype=np.int64)
    if spec.kind == "identity":
        return Assignment(num_ids, ids)
    n = spec.n
    if spec.kind == "modulus":
        return Assignment(n, ids % n)
    if stream is None:
        raise UsageError(f"stream: {spec.kind} hash needs a random stream")
    if spec.kind == "uniform":
        return Assignment(n, stream.integers(0, n - 1, num_ids))
    if spec.kind == "dirichlet":
        p = sample_dirichlet(stream, spec.alpha, n)
        return Assignment(n, sample_categorical(stream, p, size=num_ids))
    # neighborhood; numpy's % on integers is already the non-negative modulus
    if spec.radius == 0:
        return Assignment(n, ids % n)
    offsets = stream.integers(-spec.radius, spec.radius, num_ids)
    return Assignment(n, (ids + offsets) % n)


def usage_entropy(assignment: Assignment) -> float:
    """Shannon entropy (nats) of the slot-usage distribution."""
    if assignment.num_ids == 0:
        raise UsageError("usage_entropy of an empty assignment")
    counts = assignment.usage_counts
    p = counts[counts > 0] / assignment.num_ids
    return float(-(p * np.log(p)).sum())


def conv_toeplitz_assignment(filter_h: int, filter_w: int, in_h: int, in_w: int):
    """Weight-sharing structure of a valid, stride-1 2-D convolution unrolled into a matrix.

    Returns ``(assignment, rows, cols)`` with ``rows = out_h * out_w`` and
    ``cols = in_h * in_w``.  The identifiers are the flat (row-major) indices
    of the non-zero positions of the rows x cols matrix; each maps to the
    flat index of the filter weight it carries.  Output pixel (p, q) reads
    input pixel (p + a, q + b) through filter weight (a, b).
    """
    _check_conv_dims(filter_h, filter_w, in_h, in_w)
    out_h, out_w = in_h - filter_h + 1, in_w - filter_w + 1
    p, q, a, b = np.meshgrid(np.arange(out_h), np.arange(out_w), np.arange(filter_h),
                             np.arange(filter_w), indexing="ij")
    rows = (p * out_w + q).ravel()
    cols = ((p + a) * in_w + (q + b)).ravel()
    slots = (a * filter_w + b).ravel()
    ids = rows * (in_h * in_w) + cols
    order = np.argsort(ids, kind="stable")
    assignment = Assignment(filter_h * filter_w, slots[order], ids[order])
    return assignment, out_h * out_w, in_h * in_w


def materialize(assignment: Assignment, values, shape) -> np.ndarray:
    """Dense matrix of ``shape`` with position ``ids[k]`` holding ``values[slots[k]]``."""
    values = np.asarray(values)
    out = np.zeros(int(np.prod(shape)), dtype=values.dtype)
    out[assignment.ids] = values[assignment.slots]
    return out.reshape(shape)


def write_assignment(assignment: Assignment, path) -> None:
    """Write ``table_size=N`` followed by one ``id,slot`` line per identifier."""
    lines = [f"table_size={assignment.table_size}"]
    lines += [f"{i},{s}" for i, s in zip(assignment.ids.tolist(), assignment.slots.tolist())]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_assignment(path) -> Assignment:
    with open(path) as f:
        header = f.readline().strip()
        if not header.startswith("table_size="):
            raise UsageError(f"{path}: missing table_size header")
        table_size = int(header.split("=", 1)[1])
        pairs = [line.split(",") for line in f if line.strip()]
    arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return Assignment(table_size, arr[:, 1], arr[:, 0])


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def max_entropy(table_size: int) -> float:
    return math.log(table_size)
