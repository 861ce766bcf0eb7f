"""Parameter containers, layer initializers, LSTM cell, optimizers, checkpoints."""

from __future__ import annotations

import io

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_MAGIC = "CSGCKPT1"


class GradientNaNError(RuntimeError):
    pass


class ParamSet:
    """Named map of trainable tensors. `version` bumps on every optimizer step."""

    def __init__(self, tensors=None):
        self.tensors = dict(tensors or {})
        self.version = 0

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def __iter__(self):
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def add(self, name, data):
        if name in self.tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        self.tensors[name] = Tensor(data, requires_grad=True)
        return self.tensors[name]

    def zero_grad(self):
        for t in self.tensors.values():
            t.zero_grad()

    def copy(self):
        ps = ParamSet({k: Tensor(v.data.copy(), requires_grad=True)
                       for k, v in self.tensors.items()})
        ps.version = self.version
        return ps

    def snapshot(self):
        """Read-only copy safe to hand to concurrent actors."""
        ps = ParamSet({k: Tensor(v.data.copy()) for k, v in self.tensors.items()})
        ps.version = self.version
        return ps


# ---------------------------------------------------------------- init

def linear_init(rng, n_in, n_out, scale=None):
    """Scaled-uniform fan-in init; returns (W, b) arrays."""
    s = scale if scale is not None else 1.0 / np.sqrt(n_in)
    w = rng.uniform(-s, s, size=(n_in, n_out))
    b = np.zeros(n_out)
    return w, b


def orthogonal_init(rng, n):
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))


def embedding_init(rng, n_rows, dim):
    return rng.normal(0.0, 0.01, size=(n_rows, dim))


def add_linear(params, rng, name, n_in, n_out, scale=None):
    w, b = linear_init(rng, n_in, n_out, scale)
    params.add(f"{name}.w", w)
    params.add(f"{name}.b", b)


def linear(params, name, x):
    return ad.add(ad.matmul(x, params[f"{name}.w"]), params[f"{name}.b"])


def add_lstm(params, rng, name, n_in, hidden):
    wx = np.concatenate(
        [linear_init(rng, n_in, hidden)[0] for _ in range(4)], axis=1)
    wh = np.concatenate([orthogonal_init(rng, hidden) for _ in range(4)], axis=1)
    b = np.zeros(4 * hidden)
    params.add(f"{name}.wx", wx)
    params.add(f"{name}.wh", wh)
    params.add(f"{name}.b", b)


class LstmState:
    """Hidden/cell pair. h and c always share a shape."""

    __slots__ = ("h", "c")

    def __init__(self, h, c):
        self.h = h
        self.c = c

    @classmethod
    def zeros(cls, batch, hidden):
        dt = ad.default_dtype()
        return cls(Tensor(np.zeros((batch, hidden), dtype=dt)),
                   Tensor(np.zeros((batch, hidden), dtype=dt)))


def lstm_step(params, name, x, state):
    """One LSTM cell update (gates i, f, g, o in that slice order)."""
    h, c = state.h, state.c
    hidden = h.shape[-1]
    if x.shape[-1] != params[f"{name}.wx"].shape[0]:
        raise ad.ShapeError(
            f"lstm_step: input width {x.shape} vs wx {params[f'{name}.wx'].shape}")
    gates = ad.add(
        ad.add(ad.matmul(x, params[f"{name}.wx"]), ad.matmul(h, params[f"{name}.wh"])),
        params[f"{name}.b"])
    i = ad.sigmoid(gates[..., 0 * hidden:1 * hidden])
    f = ad.sigmoid(gates[..., 1 * hidden:2 * hidden])
    g = ad.tanh(gates[..., 2 * hidden:3 * hidden])
    o = ad.sigmoid(gates[..., 3 * hidden:4 * hidden])
    c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_new = ad.mul(o, ad.tanh(c_new))
    return LstmState(h_new, c_new)


# ---------------------------------------------------------------- optimizers

class Optimizer:
    """Adam or RMSProp over a ParamSet; moment buffers persist across steps."""

    def __init__(self, params, algo="adam", lr=1e-3, betas=(0.9, 0.999),
                 decay=0.99, eps=1e-8):
        if algo not in ("adam", "rmsprop"):
            raise ValueError(f"unknown optimizer {algo!r}")
        self.params = params
        self.algo = algo
        self.lr = lr
        self.betas = betas
        self.decay = decay
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self._v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def step(self):
        self.t += 1
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise GradientNaNError(
                    f"non-finite gradient in {name!r} at step {self.t}")
            if self.algo == "adam":
                b1, b2 = self.betas
                self._m[name] = b1 * self._m[name] + (1 - b1) * g
                self._v[name] = b2 * self._v[name] + (1 - b2) * g * g
                mhat = self._m[name] / (1 - b1 ** self.t)
                vhat = self._v[name] / (1 - b2 ** self.t)
                p.data -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(
                    p.data.dtype)
            else:
                self._v[name] = self.decay * self._v[name] + (1 - self.decay) * g * g
                p.data -= (self.lr * g / (np.sqrt(self._v[name]) + self.eps)).astype(
                    p.data.dtype)
        self.params.version += 1


def clip_grads(params, max_norm):
    total = 0.0
    for _, p in params.items():
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for _, p in params.items():
            if p.grad is not None:
                p.grad *= scale
    return norm


# ---------------------------------------------------------------- checkpoints

def save_params(path_or_file, named_sets):
    """Write checkpoint: text manifest, blank line, raw little-endian payload.

    `named_sets` maps a group name to a ParamSet; tensor keys are stored
    as "<group>/<name>".
    """
    entries = []
    payload = io.BytesIO()
    offset = 0
    for group, ps in named_sets.items():
        for name, t in sorted(ps.items()):
            # asarray keeps 0-d shapes (ascontiguousarray would promote to 1-d)
            arr = np.asarray(t.data, order="C")
            raw = arr.astype("<" + arr.dtype.str[1:]).tobytes()
            shape = ",".join(str(d) for d in arr.shape) or "0"
            entries.append(f"{group}/{name} {arr.dtype.name} {shape} {offset}")
            payload.write(raw)
            offset += len(raw)

    header = CHECKPOINT_MAGIC + "\n" + "\n".join(entries) + "\n\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(header.encode("ascii") + payload.getvalue())
    else:
        with open(path_or_file, "wb") as f:
            f.write(header.encode("ascii") + payload.getvalue())


def load_params(path_or_file):
    """Read a checkpoint into {group: ParamSet}."""
    if hasattr(path_or_file, "read"):
        blob = path_or_file.read()
    else:
        with open(path_or_file, "rb") as f:
            blob = f.read()
    head, _, payload = blob.partition(b"\n\n")
    lines = head.decode("ascii").splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError("not a recognized checkpoint (bad magic)")

    groups = {}
    for line in lines[1:]:
        full, dtype, shape_s, off_s = line.split(" ")
        group, _, name = full.partition("/")
        shape = tuple(int(d) for d in shape_s.split(",")) if shape_s != "0" else ()
        dt = np.dtype(dtype)
        off = int(off_s)
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(
            payload, dtype=dt.newbyteorder("<"), count=count, offset=off
        ).reshape(shape).astype(dt)
        ps = groups.setdefault(group, ParamSet())
        ps.add(name, arr)
    return groups
