"""Finite-difference oracles shared by the test modules."""
import numpy as np


def rel_err(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.abs(a - b).max() / max(np.abs(b).max(), np.finfo(float).tiny))


def fd_gradient(f, x, h=1e-6):
    """Central differences of a scalar function, step scaled by ``max(1, |x_i|)``."""
    x = np.asarray(x, float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h * max(1.0, abs(x.flat[i]))
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * e.flat[i])
    return g


def fd_jacobian(f, x, h=1e-6):
    """Central-difference Jacobian of a vector function, column by column."""
    x = np.asarray(x, float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h * max(1.0, abs(x.flat[i]))
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * e.flat[i]))
    return np.stack(cols, axis=-1)


def directional(f, x, v, h):
    return (f(x + h * v) - f(x - h * v)) / (2 * h)
