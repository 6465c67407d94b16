import numpy as np


def fd_gradient(f, x, eps=1e-6):
    """Central finite differences of a scalar function at ndarray x (float64)."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat_x = x.ravel()
    flat_g = grad.ravel()
    for i in range(x.size):
        orig = flat_x[i]
        flat_x[i] = orig + eps
        hi = f(x)
        flat_x[i] = orig - eps
        lo = f(x)
        flat_x[i] = orig
        flat_g[i] = (hi - lo) / (2 * eps)
    return grad


def relative_error(a, b, floor=1e-8):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.max(np.abs(a - b) / scale)
