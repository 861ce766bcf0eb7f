"""Reverse-mode automatic differentiation over dense numpy arrays.

Define-by-run: every op that touches a grad-requiring tensor appends a
backward closure; `backward()` walks the graph in reverse topological
order. Training runs in float32; tests switch to float64 via
`dtype_mode("float64")` because 1e-4 finite-difference tolerances are
unreliable in single precision.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

_DTYPE = np.float32


def default_dtype():
    return _DTYPE


def set_default_dtype(name):
    global _DTYPE
    if name not in ("float32", "float64"):
        raise ValueError(f"unsupported dtype {name!r}")
    _DTYPE = np.dtype(name).type


@contextlib.contextmanager
def dtype_mode(name):
    global _DTYPE
    saved = _DTYPE
    set_default_dtype(name)
    try:
        yield
    finally:
        _DTYPE = saved


class ShapeError(ValueError):
    pass


def _as_array(x):
    return np.asarray(x, dtype=_DTYPE)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def detach(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def item(self):
        return float(self.data)


# thread-local so a rollout thread inside no_grad() cannot detach a
# loss graph being built concurrently on the learner thread
_GRAD_STATE = threading.local()


def _grad_enabled():
    return getattr(_GRAD_STATE, "enabled", True)


@contextlib.contextmanager
def no_grad():
    saved = _grad_enabled()
    _GRAD_STATE.enabled = False
    try:
        yield
    finally:
        _GRAD_STATE.enabled = saved


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_elementwise(a, b, opname):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{opname}: incompatible shapes {a.shape} vs {b.shape}")


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_elementwise(a, b, "add")

    def bw(out):
        if a.requires_grad:
            a.accumulate(_unbroadcast(out.grad, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(out.grad, b.shape))

    return _node(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_elementwise(a, b, "sub")

    def bw(out):
        if a.requires_grad:
            a.accumulate(_unbroadcast(out.grad, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-out.grad, b.shape))

    return _node(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_elementwise(a, b, "mul")

    def bw(out):
        if a.requires_grad:
            a.accumulate(_unbroadcast(out.grad * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(out.grad * a.data, b.shape))

    return _node(a.data * b.data, (a, b), bw)


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")

    def bw(out):
        if a.requires_grad:
            a.accumulate(out.grad @ b.data.T)
        if b.requires_grad:
            g = out.grad
            ad = a.data
            if ad.ndim == 1:
                b.accumulate(np.outer(ad, g))
            else:
                b.accumulate(ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1]))

    return _node(a.data @ b.data, (a, b), bw)


def relu(x):
    x = _wrap(x)

    def bw(out):
        if x.requires_grad:
            x.accumulate(out.grad * (x.data > 0))

    return _node(np.maximum(x.data, 0), (x,), bw)


def tanh(x):
    x = _wrap(x)
    y = np.tanh(x.data)

    def bw(out):
        if x.requires_grad:
            x.accumulate(out.grad * (1.0 - out.data * out.data))

    return _node(y, (x,), bw)


def sigmoid(x):
    x = _wrap(x)
    y = 1.0 / (1.0 + np.exp(-x.data))

    def bw(out):
        if x.requires_grad:
            x.accumulate(out.grad * out.data * (1.0 - out.data))

    return _node(y, (x,), bw)


def exp(x):
    x = _wrap(x)

    def bw(out):
        if x.requires_grad:
            x.accumulate(out.grad * out.data)

    return _node(np.exp(x.data), (x,), bw)


def log(x):
    x = _wrap(x)

    def bw(out):
        if x.requires_grad:
            x.accumulate(out.grad / x.data)

    return _node(np.log(x.data), (x,), bw)


def sqrt(x):
    x = _wrap(x)
    y = np.sqrt(x.data)

    def bw(out):
        if x.requires_grad:
            x.accumulate(out.grad * 0.5 / np.maximum(out.data, 1e-12))

    return _node(y, (x,), bw)


def clip(x, lo, hi):
    x = _wrap(x)
    y = np.clip(x.data, lo, hi)

    def bw(out):
        if x.requires_grad:
            inside = (x.data > lo) & (x.data < hi)
            x.accumulate(out.grad * inside)

    return _node(y, (x,), bw)


def abs_(x):
    x = _wrap(x)

    def bw(out):
        if x.requires_grad:
            x.accumulate(out.grad * np.sign(x.data))

    return _node(np.abs(x.data), (x,), bw)


def tsum(x, axis=None, keepdims=False):
    x = _wrap(x)

    def bw(out):
        if x.requires_grad:
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            x.accumulate(np.broadcast_to(g, x.shape).copy())

    return _node(x.data.sum(axis=axis, keepdims=keepdims), (x,), bw)


def tmean(x, axis=None, keepdims=False):
    x = _wrap(x)
    n = x.size if axis is None else x.shape[axis]

    def bw(out):
        if x.requires_grad:
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            x.accumulate(np.broadcast_to(g, x.shape) / n)

    return _node(x.data.mean(axis=axis, keepdims=keepdims), (x,), bw)


def softmax(x, axis=-1):
    x = _wrap(x)
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(out):
        if x.requires_grad:
            g = out.grad
            dot = (g * out.data).sum(axis=axis, keepdims=True)
            x.accumulate(out.data * (g - dot))

    return _node(y, (x,), bw)


def log_softmax(x, axis=-1):
    x = _wrap(x)
    m = x.data.max(axis=axis, keepdims=True)
    shifted = x.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse

    def bw(out):
        if x.requires_grad:
            g = out.grad
            p = np.exp(out.data)
            x.accumulate(g - p * g.sum(axis=axis, keepdims=True))

    return _node(y, (x,), bw)


def concat(tensors, axis=-1):
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(out):
        pieces = np.split(out.grad, splits, axis=axis)
        for t, g in zip(tensors, pieces):
            if t.requires_grad:
                t.accumulate(g)

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def reshape(x, shape):
    x = _wrap(x)

    def bw(out):
        if x.requires_grad:
            x.accumulate(out.grad.reshape(x.shape))

    return _node(x.data.reshape(shape), (x,), bw)


def getitem(x, key):
    x = _wrap(x)

    def bw(out):
        if x.requires_grad:
            g = np.zeros_like(x.data)
            np.add.at(g, key, out.grad)
            x.accumulate(g)

    return _node(x.data[key], (x,), bw)


def embedding_lookup(table, indices):
    """Rows of `table` gathered by an integer index array."""
    table = _wrap(table)
    idx = np.asarray(indices)
    if idx.max(initial=0) >= table.shape[0] or idx.min(initial=0) < 0:
        raise ShapeError(
            f"embedding_lookup: index out of range for table {table.shape}"
        )

    def bw(out):
        if table.requires_grad:
            g = np.zeros_like(table.data)
            np.add.at(g, idx.ravel(), out.grad.reshape(-1, table.shape[1]))
            table.accumulate(g)

    return _node(table.data[idx], (table,), bw)


def gather_last(x, indices):
    """Select one element along the last axis per leading position."""
    x = _wrap(x)
    idx = np.asarray(indices)
    if idx.shape != x.shape[:-1]:
        raise ShapeError(f"gather_last: indices {idx.shape} vs data {x.shape}")
    lead = tuple(np.indices(idx.shape))

    def bw(out):
        if x.requires_grad:
            g = np.zeros_like(x.data)
            np.add.at(g, lead + (idx,), out.grad)
            x.accumulate(g)

    return _node(x.data[lead + (idx,)], (x,), bw)


def norm_l2(x):
    """Euclidean norm of all entries, as a scalar tensor."""
    x = _wrap(x)
    n = np.sqrt((x.data.astype(np.float64) ** 2).sum())

    def bw(out):
        if x.requires_grad:
            x.accumulate(out.grad * x.data / max(n, 1e-12))

    return _node(_DTYPE(n), (x,), bw)


def backward(loss):
    """Populate .grad on every reachable grad-requiring tensor.

    Repeated calls accumulate. `loss` must be a scalar attached to a tape.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.data.ndim != 0:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("backward called on a detached tensor")

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    # interior nodes get fresh gradients each call; leaves accumulate
    for node in order:
        if node._backward is not None:
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node)


def gradient_check(f, tensors, h=1e-5):
    """Max relative error between analytic and central-difference gradients.

    Runs in float64 regardless of the ambient dtype. `f` maps the tensor
    list to a scalar Tensor.
    """
    with dtype_mode("float64"):
        pts = [Tensor(t.data.astype(np.float64).copy(), requires_grad=True)
               for t in tensors]
        loss = f(pts)
        backward(loss)
        analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                    for p in pts]

        worst = 0.0
        for k, p in enumerate(pts):
            flat = p.data.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = f(pts).item()
                flat[i] = orig - h
                fm = f(pts).item()
                flat[i] = orig
                num = (fp - fm) / (2 * h)
                ana = analytic[k].ravel()[i]
                # the floor keeps finite-difference roundoff on near-zero
                # gradients from registering as relative error
                err = abs(num - ana) / max(abs(num) + abs(ana), 1e-4)
                worst = max(worst, err)
        return worst
