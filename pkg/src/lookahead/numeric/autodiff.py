"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every op that touches a tensor with ``requires_grad`` records its parents and
a backward closure on the result. ``backward`` replays that tape in reverse
topological order. Leaf gradients accumulate across calls until ``zero_grad``.
"""
from __future__ import annotations

import math
import os
import threading
from contextlib import contextmanager

import numpy as np

__all__ = [
    "Tensor", "ShapeError", "NumericError", "ContractError",
    "tensor", "no_grad", "grad_enabled", "set_debug", "debug_enabled",
    "backward", "matmul", "add", "sub", "mul", "div", "neg", "exp", "log",
    "tanh", "sigmoid", "relu", "gelu", "softmax", "log_softmax", "layer_norm",
    "embedding", "concat", "stack", "reshape", "transpose", "masked_fill",
    "where_mask", "sum", "mean", "clip", "cross_entropy", "logsumexp",
]


class ContractError(ValueError):
    """Precondition of an operation violated."""


class ShapeError(ContractError):
    """Operand shapes are incompatible."""


class NumericError(ArithmeticError):
    """A non-finite value appeared while debug screening was on."""


_state = threading.local()
_DEBUG = os.environ.get("LOOKAHEAD_DEBUG", "0") not in ("", "0", "false")


def set_debug(flag: bool) -> None:
    global _DEBUG
    _DEBUG = bool(flag)


def debug_enabled() -> bool:
    return _DEBUG


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    """A float64 array that can take part in reverse-mode differentiation."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        arr = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite value in tensor {name or ''}".strip())
        self.value = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.name = name

    @classmethod
    def _wrap(cls, value: np.ndarray, requires_grad: bool = False) -> "Tensor":
        t = cls.__new__(cls)
        t.value = value
        t.grad = None
        t.requires_grad = requires_grad
        t._parents = ()
        t._backward = None
        t.name = None
        return t

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.value)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)


def tensor(value, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(value, requires_grad=requires_grad, name=name)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor._wrap(np.asarray(x, dtype=np.float64))


def _record(value: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    if _DEBUG and not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite output from {backward_fn.__qualname__.split('.')[0]}")
    needs = grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor._wrap(value, needs)
    if needs:
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every ``requires_grad`` leaf reachable from ``loss``."""
    if loss.value.shape != ():
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad or loss._backward is None:
        raise ContractError("backward called on a loss with an empty tape")
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    grads = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _record(a.value + b.value, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return _record(a.value - b.value, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def bw(g):
        ga = _unbroadcast(g * b.value, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.value, b.shape) if b.requires_grad else None
        return ga, gb
    return _record(a.value * b.value, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.value / b.value

    def bw(g):
        ga = _unbroadcast(g / b.value, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.value, b.shape) if b.requires_grad else None
        return ga, gb
    return _record(out, (a, b), bw)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _record(-a.value, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.value)
    return _record(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = _as_tensor(a)
    return _record(np.log(a.value), (a,), lambda g: (g / a.value,))


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.value)
    return _record(out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = _sigmoid(a.value)
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.value > 0
    return _record(a.value * mask, (a,), lambda g: (g * mask,))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a) -> Tensor:
    """GELU, tanh approximation."""
    a = _as_tensor(a)
    x = a.value
    x2 = x * x
    inner = _GELU_C * x * (1.0 + 0.044715 * x2)
    th = np.tanh(inner)
    out = 0.5 * x * (1.0 + th)

    def bw(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * d_inner),)
    return _record(out, (a,), bw)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp; gradient is zero where the clamp is active."""
    a = _as_tensor(a)
    inside = (a.value >= lo) & (a.value <= hi)
    return _record(np.clip(a.value, lo, hi), (a,), lambda g: (g * inside,))


# ---------------------------------------------------------------- linear algebra

def _contig(x: np.ndarray) -> np.ndarray:
    # batched matmul only reaches BLAS on C-contiguous operands
    return x if x.flags.c_contiguous else np.ascontiguousarray(x)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != (b.shape[-2] if b.ndim > 1 else b.shape[0]):
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    if b.ndim == 1 or a.ndim == 1:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    av, bv = _contig(a.value), _contig(b.value)
    out = np.matmul(av, bv)

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, _contig(np.swapaxes(bv, -1, -2))), a.shape)
        if b.requires_grad:
            if b.ndim == 2:
                k = a.shape[-1]
                gb = av.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(_contig(np.swapaxes(av, -1, -2)), g), b.shape)
        return ga, gb
    return _record(out, (a, b), bw)


# ---------------------------------------------------------------- reductions

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = _as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    out = a.value.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)
    return _record(np.asarray(out), (a,), bw)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    n = 1
    for ax in axes:
        n *= a.shape[ax]
    return mul(sum(a, axes, keepdims), 1.0 / n)


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    m = a.value.max(axis=axis, keepdims=True)
    e = np.exp(a.value - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.log(s) + m
    p = e / s

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * p,)
    return _record(out if keepdims else np.squeeze(out, axis=axis), (a,), bw)


# ---------------------------------------------------------------- softmax family

def softmax(a, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along ``axis``; entries where ``mask`` is False get weight exactly 0."""
    a = _as_tensor(a)
    x = a.value
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    m = x.max(axis=axis, keepdims=True)
    if mask is not None and not np.all(np.isfinite(m)):
        raise ContractError("softmax: a row has every entry masked")
    e = np.exp(x - m)
    p = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        gp = g * p
        return (gp - p * gp.sum(axis=axis, keepdims=True),)
    return _record(p, (a,), bw)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    x = a.value
    m = x.max(axis=axis, keepdims=True)
    shifted = x - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)
    return _record(out, (a,), bw)


def cross_entropy(logits, targets: np.ndarray, weights: np.ndarray | None = None) -> Tensor:
    """Weighted sum of token negative log-likelihoods.

    ``logits`` is ``[..., V]``; ``targets`` holds integer ids with the leading
    shape of ``logits``. ``weights`` (same shape as targets) scales each term;
    zero-weight positions contribute nothing, whatever their target.
    """
    logits = _as_tensor(logits)
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    w = np.ones(targets.shape) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != targets.shape:
        raise ShapeError(f"cross_entropy: weights {w.shape} vs targets {targets.shape}")
    v = logits.shape[-1]
    x = logits.value.reshape(-1, v)
    t = targets.reshape(-1)
    wf = w.reshape(-1)
    rows = np.nonzero(wf)[0]
    xr = x[rows]
    m = xr.max(axis=1, keepdims=True)
    e = np.exp(xr - m)
    s = e.sum(axis=1, keepdims=True)
    nll = (np.log(s[:, 0]) + m[:, 0]) - xr[np.arange(len(rows)), t[rows]]
    out = np.asarray((wf[rows] * nll).sum())

    def bw(g):
        p = e / s
        p[np.arange(len(rows)), t[rows]] -= 1.0
        full = np.zeros_like(x)
        full[rows] = p * (wf[rows] * g)[:, None]
        return (full.reshape(logits.shape),)
    return _record(out, (logits,), bw)


def layer_norm(a, gamma, beta, eps: float = 1e-5) -> Tensor:
    a, gamma, beta = _as_tensor(a), _as_tensor(gamma), _as_tensor(beta)
    d = a.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: input width {d} vs affine {gamma.shape}/{beta.shape}")
    x = a.value
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.value + beta.value

    def bw(g):
        gx = gg = gbeta = None
        if gamma.requires_grad:
            gg = (g * xhat).reshape(-1, d).sum(axis=0)
        if beta.requires_grad:
            gbeta = g.reshape(-1, d).sum(axis=0)
        if a.requires_grad:
            gxhat = g * gamma.value
            gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                        - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, gg, gbeta
    return _record(out, (a, gamma, beta), bw)


# ---------------------------------------------------------------- shape ops

def embedding(weight, ids: np.ndarray) -> Tensor:
    weight = _as_tensor(weight)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise ContractError(f"embedding: id out of range [0, {weight.shape[0]})")
    out = weight.value[ids]

    def bw(g):
        gw = np.zeros_like(weight.value)
        np.add.at(gw, ids.reshape(-1), g.reshape(-1, weight.shape[1]))
        return (gw,)
    return _record(out, (weight,), bw)


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, type(None), type(Ellipsis))) for i in items)


def getitem(a, idx) -> Tensor:
    a = _as_tensor(a)
    out = a.value[idx]
    basic = _is_basic_index(idx)

    def bw(g):
        ga = np.zeros_like(a.value)
        if basic:
            ga[idx] += g
        else:
            np.add.at(ga, idx, g)
        return (ga,)
    return _record(np.array(out, copy=True), (a,), bw)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    out = a.value.reshape(shape)
    return _record(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = _as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _record(np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inv),))


def concat(tensors, axis: int = 0) -> Tensor:
    ts = tuple(_as_tensor(t) for t in tensors)
    if not ts:
        raise ContractError("concat of an empty sequence")
    try:
        out = np.concatenate([t.value for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {[t.shape for t in ts]} along axis {axis}") from None
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))
    return _record(out, ts, bw)


def stack(tensors, axis: int = 0) -> Tensor:
    ts = tuple(_as_tensor(t) for t in tensors)
    try:
        out = np.stack([t.value for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"stack: shapes {[t.shape for t in ts]}") from None

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(ts)))
    return _record(out, ts, bw)


def masked_fill(a, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where ``mask`` is True with a constant."""
    a = _as_tensor(a)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    out = np.where(mask, value, a.value)
    return _record(out, (a,), lambda g: (np.where(mask, 0.0, g),))


def where_mask(mask: np.ndarray, a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    mask = np.asarray(mask, dtype=bool)
    out = np.where(mask, a.value, b.value)

    def bw(g):
        return (_unbroadcast(np.where(mask, g, 0.0), a.shape),
                _unbroadcast(np.where(mask, 0.0, g), b.shape))
    return _record(out, (a, b), bw)
