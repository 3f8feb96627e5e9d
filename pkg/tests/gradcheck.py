"""Central finite differences, kept apart from the analytic backward code."""
import numpy as np


def numeric_grad(f, arr, h=1e-5):
    """d f() / d arr, perturbing ``arr`` in place one entry at a time.

    The default step sits near the cube root of float64 epsilon, where central
    differences balance truncation against roundoff.
    """
    g = np.zeros(arr.shape, dtype=np.float64)
    flat = arr.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        g.reshape(-1)[i] = (up - down) / (2 * h)
    return g


def rel_error(a, b, floor=1e-6):
    # floor keeps exactly-zero gradients (biases feeding batch norm) from dividing roundoff by ~0
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float((np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)).max())
