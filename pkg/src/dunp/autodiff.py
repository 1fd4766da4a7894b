"""Dense tensors with reverse-mode automatic differentiation.

Every differentiable operation returns a new :class:`Tensor` that records
its parent tensors and a backward rule as a closure.  ``backward(loss)``
walks the recorded graph once in reverse topological order and
accumulates ``d loss / d leaf`` into every tensor with ``requires_grad``.

Image tensors use NCHW layout throughout.  float32 is the working dtype
for training; float64 is reserved for gradient checking.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError

Array = np.ndarray

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

# Global switch consulted when an op decides whether to record itself.
# no_grad() flips it off so inference loops do not retain graphs.
_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _as_array(data, dtype=None) -> Array:
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    elif arr.dtype not in _FLOAT_DTYPES:
        arr = arr.astype(np.float32)
    out = np.ascontiguousarray(arr)
    # ascontiguousarray promotes 0-d to 1-d; keep scalars 0-d
    return out.reshape(arr.shape) if out.shape != arr.shape else out


class Tensor:
    """A contiguous n-d float array plus backprop bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None,
                 _parents: tuple = (), _backward=None, op: str = "leaf"):
        self.data = _as_array(data, dtype)
        if any(e < 1 for e in self.data.shape):
            raise ConfigurationError(
                f"tensor extents must all be >= 1, got shape {self.data.shape}")
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ConfigurationError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, op={self.op!r}{flag})"

    # operator sugar; implementations live at module level
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other, self), self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_coerce(other, self), self)

    def __neg__(self):
        return neg(self)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _coerce(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def make(data, parents, backward_fn, op: str, dtype=None) -> Tensor:
    """Build an op output, recording the graph only when some parent needs it."""
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, dtype=dtype,
                      _parents=tuple(parents), _backward=backward_fn, op=op)
    return Tensor(data, dtype=dtype, op=op)


def accumulate_grad(t: Tensor, g: Array) -> None:
    if not t.requires_grad:
        return
    if g.shape != t.data.shape:
        raise ConfigurationError(
            f"gradient shape {g.shape} does not match tensor shape {t.data.shape}")
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: Array, shape: tuple) -> Array:
    """Reduce a broadcast gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, e in enumerate(shape) if e == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(x: Tensor, y) -> Tensor:
    x, y = (x, _coerce(y, x)) if isinstance(x, Tensor) else (_coerce(x, y), y)
    out_data = x.data + y.data

    def bw(g):
        accumulate_grad(x, _unbroadcast(g, x.data.shape))
        accumulate_grad(y, _unbroadcast(g, y.data.shape))

    return make(out_data, (x, y), bw, "add")


def sub(x: Tensor, y) -> Tensor:
    x, y = (x, _coerce(y, x)) if isinstance(x, Tensor) else (_coerce(x, y), y)
    out_data = x.data - y.data

    def bw(g):
        accumulate_grad(x, _unbroadcast(g, x.data.shape))
        accumulate_grad(y, _unbroadcast(-g, y.data.shape))

    return make(out_data, (x, y), bw, "sub")


def mul(x: Tensor, y) -> Tensor:
    x, y = (x, _coerce(y, x)) if isinstance(x, Tensor) else (_coerce(x, y), y)
    out_data = x.data * y.data

    def bw(g):
        accumulate_grad(x, _unbroadcast(g * y.data, x.data.shape))
        accumulate_grad(y, _unbroadcast(g * x.data, y.data.shape))

    return make(out_data, (x, y), bw, "mul")


def div(x: Tensor, y) -> Tensor:
    x, y = (x, _coerce(y, x)) if isinstance(x, Tensor) else (_coerce(x, y), y)
    out_data = x.data / y.data

    def bw(g):
        accumulate_grad(x, _unbroadcast(g / y.data, x.data.shape))
        accumulate_grad(y, _unbroadcast(-g * x.data / (y.data * y.data), y.data.shape))

    return make(out_data, (x, y), bw, "div")


def neg(x: Tensor) -> Tensor:
    def bw(g):
        accumulate_grad(x, -g)

    return make(-x.data, (x,), bw, "neg")


def log(x: Tensor) -> Tensor:
    def bw(g):
        accumulate_grad(x, g / x.data)

    return make(np.log(x.data), (x,), bw, "log")


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes only where unclamped."""
    mask = (x.data >= lo) & (x.data <= hi)

    def bw(g):
        accumulate_grad(x, g * mask)

    return make(np.clip(x.data, lo, hi), (x,), bw, "clip")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bw(g):
        accumulate_grad(x, g * mask)

    return make(x.data * mask, (x,), bw, "relu")


def sigmoid(x: Tensor) -> Tensor:
    """Numerically stable logistic; no overflow for large |x|."""
    z = x.data
    out_data = np.empty_like(z)
    pos = z >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out_data[~pos] = ez / (1.0 + ez)

    def bw(g):
        accumulate_grad(x, g * out_data * (1.0 - out_data))

    return make(out_data, (x,), bw, "sigmoid")


def _norm_axis(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axis = _norm_axis(axis, x.ndim)
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(g, axis)
        accumulate_grad(x, np.broadcast_to(gg, x.data.shape).astype(x.data.dtype, copy=False))

    return make(out_data, (x,), bw, "sum")


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axis = _norm_axis(axis, x.ndim)
    if axis is None:
        count = x.data.size
    else:
        count = 1
        for a in axis:
            count *= x.data.shape[a]
    out_data = x.data.mean(axis=axis, keepdims=keepdims)
    inv = 1.0 / count

    def bw(g):
        gg = g * inv
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        accumulate_grad(x, np.broadcast_to(gg, x.data.shape).astype(x.data.dtype, copy=False))

    return make(out_data, (x,), bw, "mean")


def amax(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; ties route gradient to the first occurrence."""
    axis = axis % x.ndim
    idx = x.data.argmax(axis=axis)
    idx_k = np.expand_dims(idx, axis)
    out_k = np.take_along_axis(x.data, idx_k, axis)
    out_data = out_k if keepdims else out_k.squeeze(axis)

    def bw(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        z = np.zeros_like(x.data)
        np.put_along_axis(z, idx_k, gk, axis)
        accumulate_grad(x, z)

    return make(out_data, (x,), bw, "amax")


def reshape(x: Tensor, shape: tuple) -> Tensor:
    old = x.data.shape

    def bw(g):
        accumulate_grad(x, g.reshape(old))

    return make(x.data.reshape(shape), (x,), bw, "reshape")


def matmul(x: Tensor, y: Tensor) -> Tensor:
    if x.ndim != 2 or y.ndim != 2:
        raise ConfigurationError(
            f"matmul expects 2-d operands, got {x.shape} @ {y.shape}")
    if x.shape[1] != y.shape[0]:
        raise ConfigurationError(
            f"matmul inner dimensions differ: {x.shape[1]} vs {y.shape[0]}")
    out_data = x.data @ y.data

    def bw(g):
        accumulate_grad(x, g @ y.data.T)
        accumulate_grad(y, x.data.T @ g)

    return make(out_data, (x, y), bw, "matmul")


def topo_order(root: Tensor) -> list:
    """Parents-before-children ordering of the graph below ``root``."""
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
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> list:
    """Accumulate gradients of a scalar loss into every requiring leaf.

    Returns the topological order that was walked, which tests use to
    assert tape invariants.
    """
    if loss.size != 1:
        raise ConfigurationError(
            f"backward expects a scalar loss, got shape {loss.shape}")
    order = topo_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    return order


def assert_finite(t: Tensor, name: str = "tensor") -> None:
    if not np.isfinite(t.data).all():
        raise FloatingPointError(f"{name} contains NaN or Inf")
