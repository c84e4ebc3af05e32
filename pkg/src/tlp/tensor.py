"""Dense float32 tensors with reverse-mode automatic differentiation.

The graph is a define-by-run tape: every op that touches a tensor with
``requires_grad`` records its parents and a backward closure on the result.
:func:`backward` walks the tape in reverse creation order (creation order is
topological by construction), accumulates gradients into leaf tensors, and
frees the tape so saved activations are released.

Conventions, fixed once here:

* float32 everywhere by default; a ``dtype`` escape hatch exists so tests can
  run the same kernels in float64 for high-precision gradient oracles.
* reductions use numpy's deterministic pairwise summation, so identical
  inputs give bit-identical results on a fixed machine.
* no implicit broadcasting except tensor (op) scalar; shape mismatches raise
  :class:`~tlp.errors.ShapeMismatch`.
* GELU is the tanh approximation 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3))).
* elementwise max routes the gradient to the first argument on exact ties.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import NanDetected, NotScalar, ShapeMismatch

Scalar = Union[int, float]

_seq_counter = 0
_grad_enabled = True
_finite_checks = False


def set_finite_checks(enabled: bool) -> None:
    """When enabled, every op validates its result and raises NanDetected."""
    global _finite_checks
    _finite_checks = enabled


class no_grad:
    """Context manager that suspends tape recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """A dense array plus optional gradient and tape bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_seq")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        global _seq_counter
        arr = np.asarray(data, dtype=dtype)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        _seq_counter += 1
        self._seq = _seq_counter

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        if self.data.size != 1:
            raise NotScalar(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def check_finite(self) -> "Tensor":
        if not np.all(np.isfinite(self.data)):
            raise NanDetected(f"non-finite values in tensor of shape {self.shape}")
        return self

    def detach(self) -> "Tensor":
        """Same buffer, no graph: gradients never flow past this point."""
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.data.dtype)

    # -- arithmetic ------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def gelu(self):
        return gelu(self)

    def square(self):
        return square(self)

    def abs(self):
        return absval(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, *axes):
        return transpose(self, *axes)

    def slice(self, axis: int, start: int, length: int):
        return narrow(self, axis, start, length)

    def backward(self, seed: Optional[np.ndarray] = None):
        backward(self, seed=seed)


def make_result(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    """Wrap an op result, recording the tape node when gradients are live."""
    if _finite_checks and not np.all(np.isfinite(data)):
        raise NanDetected("non-finite op result")
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, dtype=data.dtype)
    if needs:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _is_scalar_operand(x) -> bool:
    if isinstance(x, (int, float)):
        return True
    if isinstance(x, Tensor) and x.data.size == 1:
        return True
    return False


def _binary_args(a: Tensor, b, op_name: str):
    """Validate binary operands: identical shapes, or one side scalar."""
    if not isinstance(a, Tensor):
        a, b = b, a  # __radd__ style call; b is now the non-tensor
    if isinstance(b, Tensor):
        if a.shape != b.shape and a.data.size != 1 and b.data.size != 1:
            raise ShapeMismatch(f"{op_name}: {a.shape} vs {b.shape}")
        return a, b
    if isinstance(b, (int, float)):
        return a, None  # scalar fast path, handled by caller
    raise TypeError(f"{op_name}: unsupported operand {type(b)!r}")


def _reduce_to(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to a scalar operand's shape."""
    if grad.shape == shape:
        return grad
    return grad.sum().reshape(shape)


# -- elementwise ops --------------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    a, bt = _binary_args(a, b, "add")
    if bt is None:
        data = a.data + b
        return make_result(data, [a], lambda g: (g,))
    data = a.data + bt.data

    def bwd(g):
        return (_reduce_to(g, a.shape) if a.shape != data.shape else g,
                _reduce_to(g, bt.shape) if bt.shape != data.shape else g)

    return make_result(data, [a, bt], bwd)


def sub(a: Tensor, b) -> Tensor:
    a, bt = _binary_args(a, b, "sub")
    if bt is None:
        return make_result(a.data - b, [a], lambda g: (g,))
    data = a.data - bt.data

    def bwd(g):
        return (_reduce_to(g, a.shape) if a.shape != data.shape else g,
                _reduce_to(-g, bt.shape) if bt.shape != data.shape else -g)

    return make_result(data, [a, bt], bwd)


def mul(a: Tensor, b) -> Tensor:
    a, bt = _binary_args(a, b, "mul")
    if bt is None:
        return make_result(a.data * b, [a], lambda g: (g * b,))
    data = a.data * bt.data
    ad, bd = a.data, bt.data

    def bwd(g):
        ga = g * bd
        gb = g * ad
        return (_reduce_to(ga, a.shape) if a.shape != data.shape else ga,
                _reduce_to(gb, bt.shape) if bt.shape != data.shape else gb)

    return make_result(data, [a, bt], bwd)


def neg(a: Tensor) -> Tensor:
    return make_result(-a.data, [a], lambda g: (-g,))


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max. Ties send the whole gradient to the first argument."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"maximum: {a.shape} vs {b.shape}")
    take_a = a.data >= b.data
    data = np.where(take_a, a.data, b.data)

    def bwd(g):
        return (np.where(take_a, g, 0), np.where(take_a, 0, g))

    return make_result(data, [a, b], bwd)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make_result(out, [a], lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return make_result(np.where(mask, a.data, 0), [a], lambda g: (np.where(mask, g, 0),))


def leaky_relu(a: Tensor, alpha: float = 0.2) -> Tensor:
    mask = a.data > 0
    data = np.where(mask, a.data, alpha * a.data)
    return make_result(data, [a], lambda g: (np.where(mask, g, alpha * g),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x * x * x)
    t = np.tanh(inner)
    data = 0.5 * x * (1.0 + t)

    def bwd(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        dt = (1.0 - t * t) * dinner
        return (g * (0.5 * (1.0 + t) + 0.5 * x * dt),)

    return make_result(data, [a], bwd)


def square(a: Tensor) -> Tensor:
    return make_result(a.data * a.data, [a], lambda g: (g * (2.0 * a.data),))


def absval(a: Tensor) -> Tensor:
    sign = np.where(a.data >= 0, 1.0, -1.0).astype(a.data.dtype)
    return make_result(np.abs(a.data), [a], lambda g: (g * sign,))


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "max": maximum,
    "tanh": tanh,
    "gelu": gelu,
    "relu": relu,
    "square": square,
    "abs": absval,
}


def elementwise(op_kind: str, a: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """Dispatch by name; binary kinds require b, unary kinds forbid it."""
    fn = _ELEMENTWISE.get(op_kind)
    if fn is None:
        raise ValueError(f"unknown elementwise op {op_kind!r}")
    if op_kind in ("add", "sub", "mul", "max"):
        if b is None:
            raise ShapeMismatch(f"{op_kind} needs two operands")
        return fn(a, b)
    if b is not None:
        raise ShapeMismatch(f"{op_kind} is unary")
    return fn(a)


# -- reductions --------------------------------------------------------------


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g.reshape(() if not keepdims else g.shape), a.shape).astype(a.data.dtype).copy(),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, a.shape).copy(),)

    return make_result(np.asarray(data), [a], bwd)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    data = a.data.mean(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g.reshape(() if not keepdims else g.shape), a.shape).astype(a.data.dtype) / n,)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, a.shape) / n,)

    return make_result(np.asarray(data), [a], bwd)


# -- shape ops ---------------------------------------------------------------


def reshape(a: Tensor, *shape) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    data = a.data.reshape(shape)
    src_shape = a.shape
    return make_result(data, [a], lambda g: (g.reshape(src_shape),))


def transpose(a: Tensor, *axes) -> Tensor:
    if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
        axes = tuple(axes[0])
    if not axes:
        axes = tuple(reversed(range(a.data.ndim)))
    inv = np.argsort(axes)
    return make_result(a.data.transpose(axes), [a], lambda g: (g.transpose(inv),))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeMismatch("concat of zero tensors")
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        s = list(t.shape)
        if len(s) != len(base) or any(s[i] != base[i] for i in range(len(s)) if i != axis % len(s)):
            raise ShapeMismatch(f"concat: non-concat extents differ ({tensors[0].shape} vs {t.shape})")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(
            g[(slice(None),) * (axis % g.ndim) + (slice(bounds[i], bounds[i + 1]),)]
            for i in range(len(sizes))
        )

    return make_result(data, tensors, bwd)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis; backward scatters into place."""
    if length <= 0 or start < 0 or start + length > a.shape[axis]:
        raise ShapeMismatch(f"slice [{start}:{start + length}) outside axis of extent {a.shape[axis]}")
    idx = (slice(None),) * (axis % a.data.ndim) + (slice(start, start + length),)
    data = a.data[idx]

    def bwd(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        full[idx] = g
        return (full,)

    return make_result(data.copy(), [a], bwd)


def pad2d(a: Tensor, pad: int) -> Tensor:
    """Zero-pad the trailing two (spatial) axes symmetrically."""
    if pad < 0:
        raise ShapeMismatch("pad must be >= 0")
    if pad == 0:
        return make_result(a.data.copy(), [a], lambda g: (g,))
    width = [(0, 0)] * (a.data.ndim - 2) + [(pad, pad), (pad, pad)]
    data = np.pad(a.data, width)

    def bwd(g):
        sl = (slice(None),) * (a.data.ndim - 2) + (slice(pad, -pad), slice(pad, -pad))
        return (g[sl],)

    return make_result(data, [a], bwd)


def crop2d(a: Tensor, pad: int) -> Tensor:
    """Inverse of pad2d: drop a border of width ``pad`` on the spatial axes."""
    if pad == 0:
        return make_result(a.data.copy(), [a], lambda g: (g,))
    sl = (slice(None),) * (a.data.ndim - 2) + (slice(pad, -pad), slice(pad, -pad))
    data = a.data[sl].copy()

    def bwd(g):
        width = [(0, 0)] * (a.data.ndim - 2) + [(pad, pad), (pad, pad)]
        return (np.pad(g, width),)

    return make_result(data, [a], bwd)


# -- backward pass -----------------------------------------------------------


def backward(loss: Tensor, seed: Optional[np.ndarray] = None) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable requires_grad leaf.

    Repeated calls on fresh graphs accumulate into ``.grad``; the tape of
    this graph is freed before returning.
    """
    if loss.data.size != 1:
        raise NotScalar(f"backward on tensor of shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("backward on a tensor that does not require grad")

    visited: set[int] = set()
    nodes: list[Tensor] = []
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in visited:
            continue
        visited.add(id(t))
        nodes.append(t)
        stack.extend(t._parents)
    nodes.sort(key=lambda t: t._seq, reverse=True)

    grads: dict[int, np.ndarray] = {
        id(loss): np.ones(loss.shape, dtype=loss.data.dtype) if seed is None else np.asarray(seed, dtype=loss.data.dtype)
    }
    for node in nodes:
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else prev + pg

    # free the tape so saved activations are released
    for node in nodes:
        if node._backward is not None:
            node._parents = ()
            node._backward = None


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
