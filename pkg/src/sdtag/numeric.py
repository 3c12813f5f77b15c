"""Dense float64 tensors with tape-based reverse-mode differentiation.

Deliberately small: the primitive set (matmul, add, mul, tanh, sigmoid,
softmax, logsumexp, concat, slice, sum, gather, reshape) is exactly what
the sequence models in this package compose from, nothing more. Tensors
are treated as immutable once created; gradients live on the Tape, not
on the Tensor.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

__all__ = [
    "Tensor",
    "Tape",
    "astensor",
    "add",
    "mul",
    "matmul",
    "tanh",
    "sigmoid",
    "logsumexp",
    "softmax",
    "concat",
    "reduce_sum",
    "mean",
    "gather",
    "reshape",
    "grad_check",
]

_ACTIVE_TAPE: "Tape | None" = None


class Tensor:
    """A float64 ndarray plus the bookkeeping needed for backprop."""

    __slots__ = ("data", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    # operator sugar; all routing through the module-level primitives
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(astensor(other), -1.0))

    def __rsub__(self, other):
        return add(astensor(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return _slice(self, idx)


def astensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of primitive ops for one backward pass.

    Nodes are appended in creation order, which is a topological order,
    so one reversed sweep visits every node exactly once.
    """

    def __init__(self):
        self._nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a Tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def gradient(self, output: Tensor, params) -> list[np.ndarray]:
        """Gradients of a scalar `output` with respect to each param Tensor."""
        if output.data.size != 1:
            raise ValueError("gradient target must be a scalar")
        grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
        for node in reversed(self._nodes):
            g = grads.pop(id(node), None)
            if g is None or node._backward is None:
                continue
            node._backward(g, grads)
        return [grads.get(id(p), np.zeros_like(p.data)) for p in params]


def _record(data, parents, backward) -> Tensor:
    if _ACTIVE_TAPE is None:
        return Tensor(data)
    out = Tensor(data, parents=parents, backward=backward)
    _ACTIVE_TAPE._nodes.append(out)
    return out


def _acc(grads: dict, t: Tensor, g: np.ndarray) -> None:
    key = id(t)
    if key in grads:
        grads[key] = grads[key] + g
    else:
        grads[key] = g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape`, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitives


def add(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    data = a.data + b.data

    def backward(g, grads):
        _acc(grads, a, _unbroadcast(g, a.data.shape))
        _acc(grads, b, _unbroadcast(g, b.data.shape))

    return _record(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    data = a.data * b.data

    def backward(g, grads):
        _acc(grads, a, _unbroadcast(g * b.data, a.data.shape))
        _acc(grads, b, _unbroadcast(g * a.data, b.data.shape))

    return _record(data, (a, b), backward)


def matmul(a, b) -> Tensor:
    """2-D matrix product; the only rank this package needs."""
    a, b = astensor(a), astensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def backward(g, grads):
        _acc(grads, a, g @ b.data.T)
        _acc(grads, b, a.data.T @ g)

    return _record(data, (a, b), backward)


def tanh(x):
    if not isinstance(x, Tensor):
        return np.tanh(np.asarray(x, dtype=np.float64))
    data = np.tanh(x.data)

    def backward(g, grads):
        _acc(grads, x, g * (1.0 - data * data))

    return _record(data, (x,), backward)


def sigmoid(x):
    if not isinstance(x, Tensor):
        return expit(np.asarray(x, dtype=np.float64))
    data = expit(x.data)

    def backward(g, grads):
        _acc(grads, x, g * data * (1.0 - data))

    return _record(data, (x,), backward)


def _lse_data(v: np.ndarray, axis, keepdims):
    m = np.max(v, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(v - m), axis=axis, keepdims=True))
    if keepdims:
        return out
    if axis is None:
        return np.squeeze(out)
    return np.squeeze(out, axis=axis)


def logsumexp(v, axis=None, keepdims=False):
    """max(v) + log sum exp(v - max(v)); overflow-safe for finite input."""
    if not isinstance(v, Tensor):
        arr = np.asarray(v, dtype=np.float64)
        if arr.size == 0:
            raise ValueError("logsumexp of empty input")
        return _lse_data(arr, axis, keepdims)
    if v.data.size == 0:
        raise ValueError("logsumexp of empty input")
    data = _lse_data(v.data, axis, keepdims)
    lse_keep = _lse_data(v.data, axis, True)
    weights = np.exp(v.data - lse_keep)

    def backward(g, grads):
        ge = np.asarray(g)
        if not keepdims:
            ge = ge.reshape(lse_keep.shape)
        _acc(grads, v, ge * weights)

    return _record(data, (v,), backward)


def _softmax_data(v: np.ndarray, axis):
    return np.exp(v - _lse_data(v, axis, True))


def softmax(v, axis=-1):
    """Softmax along `axis`, computed via the logsumexp shift."""
    if not isinstance(v, Tensor):
        arr = np.asarray(v, dtype=np.float64)
        if arr.size == 0:
            raise ValueError("softmax of empty input")
        return _softmax_data(arr, axis)
    if v.data.size == 0:
        raise ValueError("softmax of empty input")
    data = _softmax_data(v.data, axis)

    def backward(g, grads):
        inner = np.sum(g * data, axis=axis, keepdims=True)
        _acc(grads, v, data * (g - inner))

    return _record(data, (v,), backward)


def concat(tensors, axis=0) -> Tensor:
    tensors = [astensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g, grads):
        offset = 0
        for t, n in zip(tensors, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + n)
            _acc(grads, t, g[tuple(sl)])
            offset += n

    return _record(data, tuple(tensors), backward)


def reduce_sum(x, axis=None, keepdims=False) -> Tensor:
    x = astensor(x)
    data = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g, grads):
        ge = np.asarray(g)
        if not keepdims and axis is not None:
            ge = np.expand_dims(ge, axis)
        _acc(grads, x, np.broadcast_to(ge, x.data.shape).copy())

    return _record(data, (x,), backward)


def mean(x, axis=None) -> Tensor:
    x = astensor(x)
    n = x.data.size if axis is None else x.data.shape[axis]
    return mul(reduce_sum(x, axis=axis), 1.0 / n)


def gather(x, rows, cols) -> Tensor:
    """Pick entries x[rows[i], cols[i]] into a 1-D tensor."""
    x = astensor(x)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    data = x.data[rows, cols]

    def backward(g, grads):
        full = np.zeros_like(x.data)
        np.add.at(full, (rows, cols), g)
        _acc(grads, x, full)

    return _record(data, (x,), backward)


def reshape(x, shape) -> Tensor:
    x = astensor(x)
    data = x.data.reshape(shape)

    def backward(g, grads):
        _acc(grads, x, np.asarray(g).reshape(x.data.shape))

    return _record(data, (x,), backward)


def _slice(x: Tensor, idx) -> Tensor:
    data = x.data[idx].copy()  # copy: graph nodes must not alias param storage

    def backward(g, grads):
        full = np.zeros_like(x.data)
        full[idx] = g
        _acc(grads, x, full)

    return _record(data, (x,), backward)


# ---------------------------------------------------------------------------
# finite-difference oracle


def grad_check(f, params, eps: float = 1e-5) -> float:
    """Max relative error between taped gradients of f and central differences.

    `f` maps the param list to a scalar Tensor. Relative error per
    coordinate is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    if not 1e-6 <= eps <= 1e-4:
        raise ValueError("eps must lie in [1e-6, 1e-4]")
    with Tape() as tape:
        out = f(params)
    if not np.isfinite(out.data).all():
        raise ValueError("function value is not finite")
    analytic = tape.gradient(out, params)

    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = f(params).item()
            flat[i] = orig - eps
            f_minus = f(params).item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(gflat[i] - numeric) / max(1e-8, abs(gflat[i]) + abs(numeric))
            worst = max(worst, err)
    return worst
