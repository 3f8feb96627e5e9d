"""MLPs whose weights live in shared hash tables, with hand-written backprop.

Every weight position of every linear layer gets an integer identifier
(row-major within a layer, layers in order).  A :class:`WeightTable` maps
identifiers to slots through an :class:`~arbnets.hashing.Assignment`; the
forward pass gathers slot values into a dense matrix and the backward pass
scatter-adds position gradients back into the slots, so positions sharing a
slot always see the same value and their gradients sum.
"""
from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from .errors import UsageError
from .hashing import Assignment, HashSpec, build_assignment, usage_entropy
from .numerics import RngStream


class Param:
    """A dense parameter vector with its gradient accumulator and momentum buffer."""

    def __init__(self, values):
        self.values = values
        self.grads = np.zeros_like(values)
        self.velocity = np.zeros_like(values)

    def zero_grads(self):
        self.grads[...] = 0


class WeightTable(Param):
    def __init__(self, assignment: Assignment, values):
        if len(values) != assignment.table_size:
            raise UsageError(f"table has {len(values)} values for table_size {assignment.table_size}")
        super().__init__(values)
        self.assignment = assignment

    @property
    def table_size(self):
        return self.assignment.table_size


class ArbLinear:
    """Fully connected layer whose weight matrix is gathered from a WeightTable.

    ``table_base`` is the first identifier covered by the table's assignment
    (``id_offset`` for per-layer tables, 0 for a network-wide table).
    """

    def __init__(self, in_dim, out_dim, table: WeightTable, id_offset=0, table_base=0, mask=None,
                 dtype=np.float32):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.table = table
        self.id_offset, self.table_base = id_offset, table_base
        if mask is None:
            mask = np.ones((out_dim, in_dim), dtype=bool)
        if mask.shape != (out_dim, in_dim):
            raise UsageError(f"mask shape {mask.shape} != {(out_dim, in_dim)}")
        self.mask = mask
        first = id_offset - table_base
        if first < 0 or first + in_dim * out_dim > table.assignment.num_ids:
            raise UsageError("layer identifiers not covered by the table assignment")
        self.slots = table.assignment.slots[first:first + in_dim * out_dim].reshape(out_dim, in_dim)
        self.active = np.flatnonzero(mask)
        self.active_slots = self.slots.ravel()[self.active]
        self.bias = Param(np.zeros(out_dim, dtype=dtype))
        self._x = None
        self._w = None

    @property
    def bias_grad(self):
        return self.bias.grads

    def weight(self) -> np.ndarray:
        w = np.zeros(self.out_dim * self.in_dim, dtype=self.table.values.dtype)
        w[self.active] = self.table.values[self.active_slots]
        return w.reshape(self.out_dim, self.in_dim)

    def active_assignment(self) -> Assignment:
        """Assignment restricted to this layer's unmasked positions."""
        first = self.id_offset - self.table_base
        return self.table.assignment.restrict(first + self.active)

    def forward(self, x, training=True):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise UsageError(f"input shape {x.shape} does not match in_dim {self.in_dim}")
        w = self.weight()
        self._x, self._w = x, w
        return x @ w.T + self.bias.values

    def backward(self, dy):
        x, w = self._x, self._w
        if x is None:
            raise UsageError("backward called before forward")
        if dy.shape != (x.shape[0], self.out_dim):
            raise UsageError(f"upstream gradient shape {dy.shape} != {(x.shape[0], self.out_dim)}")
        dw = (dy.T @ x).ravel()[self.active]
        self.table.grads += np.bincount(self.active_slots, weights=dw,
                                        minlength=self.table.table_size).astype(self.table.grads.dtype)
        self.bias.grads += dy.sum(axis=0)
        return dy @ w

    def params(self):
        return [self.table, self.bias]


def arblinear_forward(layer: ArbLinear, x):
    return layer.forward(x)


def arblinear_backward(layer: ArbLinear, x, dy):
    if layer._x is not x:
        layer.forward(x)
    return layer.backward(dy)


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))


def elu_backward(x, dy):
    return dy * np.where(x > 0, 1.0, np.exp(np.minimum(x, 0))).astype(dy.dtype)


class ELU:
    def forward(self, x, training=True):
        self._x = x
        return elu(x)

    def backward(self, dy):
        return elu_backward(self._x, dy)

    def params(self):
        return []


class BatchNorm:
    """Per-feature batch normalisation.

    Training mode normalises with the batch's biased variance and updates the
    running statistics (unbiased variance) by exponential moving average;
    inference mode uses the running statistics.
    """

    def __init__(self, num_features, eps=1e-5, momentum=0.1, dtype=np.float32):
        if not eps > 0:
            raise UsageError("eps must be > 0")
        self.gamma = Param(np.ones(num_features, dtype=dtype))
        self.beta = Param(np.zeros(num_features, dtype=dtype))
        self.running_mean = np.zeros(num_features, dtype=dtype)
        self.running_var = np.ones(num_features, dtype=dtype)
        self.eps = eps
        self.momentum = momentum
        self.training = True

    def forward(self, x, training=True):
        if training:
            m = x.shape[0]
            if m < 2:
                raise UsageError("batch norm in training mode needs a batch of at least 2")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean *= 1 - self.momentum
            self.running_mean += self.momentum * mean
            self.running_var *= 1 - self.momentum
            self.running_var += self.momentum * var * (m / (m - 1))
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std)
        return xhat * self.gamma.values + self.beta.values

    def backward(self, dy):
        xhat, inv_std = self._cache
        self.gamma.grads += (dy * xhat).sum(axis=0)
        self.beta.grads += dy.sum(axis=0)
        g = dy * self.gamma.values
        return inv_std * (g - g.mean(axis=0) - xhat * (g * xhat).mean(axis=0))

    def params(self):
        return [self.gamma, self.beta]


def batchnorm_forward(state: BatchNorm, x):
    return state.forward(x, training=state.training)


def batchnorm_backward(state: BatchNorm, dy):
    return state.backward(dy)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient with respect to the logits."""
    labels = np.asarray(labels)
    batch, classes = logits.shape
    if labels.shape != (batch,):
        raise UsageError(f"labels shape {labels.shape} does not match batch {batch}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise UsageError(f"label out of range [0, {classes})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    rows = np.arange(batch)
    loss = -log_probs[rows, labels].mean()
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1
    return float(loss), grad / batch


class Network:
    """Ordered Linear -> ELU -> BatchNorm blocks ending in a softmax cross-entropy head."""

    def __init__(self, layers, tables, arch, spec: HashSpec, scope, sparsity=0.0, dtype=np.float32):
        self.layers = layers
        self.tables = tables
        self.arch = tuple(arch)
        self.spec = spec
        self.scope = scope
        self.sparsity = sparsity
        self.dtype = np.dtype(dtype)
        self.training = True

    @property
    def linears(self):
        return [l for l in self.layers if isinstance(l, ArbLinear)]

    @property
    def batchnorms(self):
        return [l for l in self.layers if isinstance(l, BatchNorm)]

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    def forward(self, x):
        x = np.asarray(x, dtype=self.dtype)
        for layer in self.layers:
            x = layer.forward(x, training=self.training)
        return x

    def backward(self, dlogits):
        d = dlogits
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return d

    def loss_and_grads(self, x, labels):
        """Forward, loss and backward; gradients accumulate into the parameters."""
        logits = self.forward(x)
        loss, dlogits = softmax_cross_entropy(logits, labels)
        self.backward(dlogits.astype(self.dtype))
        return loss, logits

    def predict(self, x):
        return self.forward(x).argmax(axis=1)

    def params(self):
        """Every trainable parameter exactly once, even when a table is shared by several layers."""
        seen, out = set(), []
        for layer in self.layers:
            for p in layer.params():
                if id(p) not in seen:
                    seen.add(id(p))
                    out.append(p)
        return out

    def zero_grads(self):
        for p in self.params():
            p.zero_grads()

    def weights(self):
        return [l.weight() for l in self.linears]

    def table_entropies(self):
        """Usage entropy of each table over the active positions that use it."""
        if self.scope == "global":
            t = self.tables[0]
            active = np.concatenate([l.id_offset + l.active for l in self.linears])
            return [usage_entropy(t.assignment.restrict(active))]
        return [usage_entropy(l.active_assignment()) for l in self.linears]

    def mask_digest(self):
        h = hashlib.sha256()
        for l in self.linears:
            h.update(np.packbits(l.mask).tobytes())
        return h.hexdigest()


SCOPES = ("per_layer", "global")


def build_network(arch, spec: HashSpec, sparsity=0.0, scope="per_layer", stream: RngStream | None = None,
                  dtype=np.float32, assignments=None, masks=None) -> Network:
    """Build Linear -> ELU -> BatchNorm blocks for the layer sizes in ``arch``.

    The table size comes from ``spec.n``; the identity hash uses one slot per
    weight.  Each weight position is masked independently with probability
    ``sparsity``.  Slot values start as Normal(0, 2 / fan_in) of the owning
    layer (of the first layer for a global table); biases start at 0.

    ``assignments`` and ``masks`` override the random draws, which is how a
    checkpoint is rebuilt.
    """
    arch = tuple(int(a) for a in arch)
    if len(arch) < 2 or min(arch) < 1:
        raise UsageError(f"arch must list at least two positive sizes, got {arch}")
    if spec.kind == "conv_toeplitz":
        raise UsageError("conv_toeplitz is a fixed structure, not a hash for MLP layers")
    if not 0 <= sparsity < 1:
        raise UsageError(f"sparsity must be in [0, 1), got {sparsity}")
    if scope not in SCOPES:
        raise UsageError(f"scope must be one of {SCOPES}, got {scope!r}")
    if stream is None:
        stream = RngStream(0)

    shapes = list(zip(arch[1:], arch[:-1]))
    counts = [o * i for o, i in shapes]
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int).tolist()

    if masks is None:
        mask_stream = stream.child("mask")
        masks = [mask_stream.uniform((o, i)) >= sparsity if sparsity > 0 else np.ones((o, i), dtype=bool)
                 for o, i in shapes]

    hash_stream = stream.child("hash")
    init_stream = stream.child("init")

    def make_table(k, num_ids, fan_in):
        if assignments is not None:
            a = assignments[k]
        else:
            a = build_assignment(spec, num_ids, hash_stream.child(str(k)))
        values = init_stream.child(str(k)).normal(a.table_size, scale=math.sqrt(2.0 / fan_in))
        return WeightTable(a, values.astype(dtype))

    if scope == "global":
        tables = [make_table(0, sum(counts), arch[0])]
        layer_tables = [(tables[0], 0)] * len(shapes)
    else:
        tables = [make_table(k, counts[k], shapes[k][1]) for k in range(len(shapes))]
        layer_tables = [(t, off) for t, off in zip(tables, offsets)]

    layers = []
    for k, ((o, i), off) in enumerate(zip(shapes, offsets)):
        table, base = layer_tables[k]
        layers.append(ArbLinear(i, o, table, id_offset=off, table_base=base, mask=masks[k], dtype=dtype))
        layers.append(ELU())
        layers.append(BatchNorm(o, dtype=dtype))
    return Network(layers, tables, arch, spec, scope, sparsity, dtype)


def save_checkpoint(net: Network, path, seed=None) -> None:
    """Write a self-contained ``.npz`` checkpoint: structure, assignments, masks and all state."""
    meta = {
        "arch": list(net.arch),
        "spec": net.spec.to_dict(),
        "scope": net.scope,
        "sparsity": net.sparsity,
        "dtype": net.dtype.name,
        "seed": seed,
        "mask_digest": net.mask_digest(),
        "table_sizes": [t.table_size for t in net.tables],
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    for k, t in enumerate(net.tables):
        arrays[f"table{k}_slots"] = np.asarray(t.assignment.slots)
        arrays[f"table{k}_values"] = t.values
        arrays[f"table{k}_velocity"] = t.velocity
    for k, l in enumerate(net.linears):
        arrays[f"mask{k}"] = l.mask
        arrays[f"bias{k}"] = l.bias.values
        arrays[f"bias{k}_velocity"] = l.bias.velocity
    for k, bn in enumerate(net.batchnorms):
        for name in ("gamma", "beta"):
            arrays[f"bn{k}_{name}"] = getattr(bn, name).values
            arrays[f"bn{k}_{name}_velocity"] = getattr(bn, name).velocity
        arrays[f"bn{k}_running_mean"] = bn.running_mean
        arrays[f"bn{k}_running_var"] = bn.running_var
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_checkpoint(path) -> Network:
    with np.load(path) as z:
        meta = json.loads(z["meta"].tobytes().decode())
        spec = HashSpec.from_dict(meta["spec"])
        n_tables = len(meta["table_sizes"])
        assignments = [Assignment(meta["table_sizes"][k], z[f"table{k}_slots"]) for k in range(n_tables)]
        n_layers = len(meta["arch"]) - 1
        masks = [z[f"mask{k}"] for k in range(n_layers)]
        net = build_network(meta["arch"], spec, meta["sparsity"], meta["scope"], RngStream(0),
                            dtype=np.dtype(meta["dtype"]), assignments=assignments, masks=masks)
        if net.mask_digest() != meta["mask_digest"]:
            raise UsageError(f"{path}: mask digest mismatch")
        for k, t in enumerate(net.tables):
            t.values[...] = z[f"table{k}_values"]
            t.velocity[...] = z[f"table{k}_velocity"]
        for k, l in enumerate(net.linears):
            l.bias.values[...] = z[f"bias{k}"]
            l.bias.velocity[...] = z[f"bias{k}_velocity"]
        for k, bn in enumerate(net.batchnorms):
            for name in ("gamma", "beta"):
                getattr(bn, name).values[...] = z[f"bn{k}_{name}"]
                getattr(bn, name).velocity[...] = z[f"bn{k}_{name}_velocity"]
            bn.running_mean[...] = z[f"bn{k}_running_mean"]
            bn.running_var[...] = z[f"bn{k}_running_var"]
    return net
