"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray plus the recipe to push gradients to its parents.
`backward(loss)` walks the tape and returns {id(tensor): gradient} for every
node reachable from the loss, which is how exact analytic gradients for all
trainable tensors are obtained.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("value", "parents", "vjp")

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value)
        self.parents = tuple(parents)
        self.vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if dtype is not None and arr.dtype != dtype and np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(dtype)
    return Tensor(arr)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    """Coerce scalar constants to the other operand's dtype (keeps float32 graphs)."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, as_tensor(b, a.dtype)
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return as_tensor(a, b.dtype), b
    return as_tensor(a), as_tensor(b)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce `grad` back to `shape` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise ------------------------------------------------------------


def add(a, b):
    a, b = _pair(a, b)
    return Tensor(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = _pair(a, b)
    return Tensor(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    a, b = _pair(a, b)
    return Tensor(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def div(a, b):
    a, b = _pair(a, b)
    out = a.value / b.value
    return Tensor(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.value, a.shape),
            _unbroadcast(-g * out / b.value, b.shape),
        ),
    )


def neg(a):
    a = as_tensor(a)
    return Tensor(-a.value, (a,), lambda g: (-g,))


def power(a, exponent: float):
    a = as_tensor(a)
    return Tensor(
        a.value**exponent,
        (a,),
        lambda g: (g * exponent * a.value ** (exponent - 1),),
    )


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.value)
    return Tensor(out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    return Tensor(np.log(a.value), (a,), lambda g: (g / a.value,))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.value)
    return Tensor(out, (a,), lambda g: (g * 0.5 / out,))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.value)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-np.abs(a.value)))
    out = np.where(a.value >= 0, out, 1.0 - out)
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


def gelu(a):
    """Gaussian error linear unit (tanh approximation)."""
    a = as_tensor(a)
    c = float(np.sqrt(2.0 / np.pi))
    inner = c * (a.value + 0.044715 * a.value**3)
    t = np.tanh(inner)
    out = 0.5 * a.value * (1.0 + t)

    def vjp(g):
        dinner = c * (1.0 + 3 * 0.044715 * a.value**2)
        da = 0.5 * (1.0 + t) + 0.5 * a.value * (1.0 - t * t) * dinner
        return (g * da,)

    return Tensor(out, (a,), vjp)


# -- reductions and shape ----------------------------------------------------


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=False),)

    return Tensor(out, (a,), vjp)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.value.size if axis is None else a.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a, shape):
    a = as_tensor(a)
    return Tensor(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def swapaxes(a, axis1, axis2):
    a = as_tensor(a)
    return Tensor(
        np.swapaxes(a.value, axis1, axis2),
        (a,),
        lambda g: (np.swapaxes(g, axis1, axis2),),
    )


def getitem(a, idx):
    """Basic (slice/int) indexing; no repeated advanced indices."""
    a = as_tensor(a)

    def vjp(g):
        out = np.zeros(a.shape, dtype=a.dtype)
        out[idx] += g
        return (out,)

    return Tensor(a.value[idx], (a,), vjp)


def take_rows(a, indices):
    """Gather rows along axis 0 with an integer array (duplicates allowed)."""
    a = as_tensor(a)
    idx = np.asarray(indices)

    def vjp(g):
        out = np.zeros(a.shape, dtype=a.dtype)
        np.add.at(out, idx, g)
        return (out,)

    return Tensor(a.value[idx], (a,), vjp)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(np.concatenate([t.value for t in tensors], axis=axis), tuple(tensors), vjp)


# -- linear algebra -----------------------------------------------------------


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul requires tensors of rank >= 2")

    def vjp(g):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

    return Tensor(a.value @ b.value, (a, b), vjp)


# -- numerically stable softmax family ---------------------------------------


def softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return Tensor(out, (a,), vjp)


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def vjp(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return Tensor(out, (a,), vjp)


def logsumexp(a, axis=-1):
    a = as_tensor(a)
    m = a.value.max(axis=axis, keepdims=True)
    e = np.exp(a.value - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (np.log(s) + m).squeeze(axis)

    def vjp(g):
        return (np.expand_dims(g, axis) * e / s,)

    return Tensor(out, (a,), vjp)


# -- backward pass ------------------------------------------------------------


def backward(root: Tensor, seed=None) -> dict[int, np.ndarray]:
    """Reverse accumulation from `root`; returns {id(tensor): gradient}."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    grads: dict[int, np.ndarray] = {}
    if seed is None:
        seed = np.ones(root.shape, dtype=root.dtype)
    grads[id(root)] = np.asarray(seed)

    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node.vjp is None:
            continue
        parent_grads = node.vjp(g)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None:
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg
    return grads
