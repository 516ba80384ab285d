"""Small reverse-mode autodiff over dense float64 numpy arrays.

Only scalar-to-tensor broadcasting is implicit. Row-wise bias addition goes
through the explicit :func:`add_rowwise` op so every backward rule stays a
few lines long.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "DomainError",
    "Tensor",
    "tensor",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "add_rowwise",
    "sigmoid",
    "log",
    "exp",
    "sqrt",
    "softplus",
    "relu",
    "tanh",
    "sum",
    "mean",
    "softmax",
    "dot",
    "l2_norm",
    "concat",
    "take",
    "backward",
    "zero_grad",
]


class ShapeError(ValueError):
    """Operands have incompatible shapes."""

    def __init__(self, op: str, a: tuple, b: tuple):
        super().__init__(f"{op}: incompatible shapes {a} and {b}")
        self.op = op
        self.shapes = (a, b)


class DomainError(ValueError):
    """Input lies outside an op's mathematical domain."""


class Tensor:
    """A node in the computation graph.

    ``value`` is never mutated by ops; parameter updates replace it.
    ``grad`` is only maintained on tensors created with ``requires_grad``.
    """

    __slots__ = ("value", "grad", "requires_grad", "parents", "backward_fn", "name")

    def __init__(
        self,
        value,
        requires_grad: bool = False,
        parents: tuple = (),
        backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
        name: str | None = None,
    ):
        self.value = np.array(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.value) if requires_grad else None
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.value.copy()

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

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

    def backward(self) -> dict:
        return backward(self)


def tensor(value, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(value, requires_grad=requires_grad, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tracks(*xs: Tensor) -> bool:
    return any(x.requires_grad or x.backward_fn is not None for x in xs)


def _node(value, parents: tuple, backward_fn) -> Tensor:
    if not _tracks(*parents):
        return Tensor(value)
    return Tensor(value, parents=parents, backward_fn=backward_fn)


def _reduce_to(grad: np.ndarray, shape: tuple) -> np.ndarray:
    # undo scalar broadcasting
    if grad.shape == shape:
        return grad
    return np.full(shape, grad.sum())


def _binary_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ShapeError(op, a.shape, b.shape)


# ---------------------------------------------------------------------------
# elementwise binary ops


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shape("add", a, b)

    def bw(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _node(a.value + b.value, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shape("sub", a, b)

    def bw(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _node(a.value - b.value, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shape("mul", a, b)

    def bw(g):
        return _reduce_to(g * b.value, a.shape), _reduce_to(g * a.value, b.shape)

    return _node(a.value * b.value, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shape("div", a, b)
    if np.any(b.value == 0.0):
        raise DomainError("div: division by zero")
    out = a.value / b.value

    def bw(g):
        return (
            _reduce_to(g / b.value, a.shape),
            _reduce_to(-g * out / b.value, b.shape),
        )

    return _node(out, (a, b), bw)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _node(-a.value, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """Matrix product of 2-D operands; a 1-D operand is treated as a row/column."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.ndim not in (1, 2) or b.value.ndim not in (1, 2):
        raise ShapeError("matmul", a.shape, b.shape)
    if a.shape[-1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    out = a.value @ b.value

    def bw(g):
        av, bv = a.value, b.value
        if av.ndim == 1 and bv.ndim == 1:
            return g * bv, g * av
        if av.ndim == 1:
            return bv @ g, np.outer(av, g)
        if bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        return g @ bv.T, av.T @ g

    return _node(out, (a, b), bw)


def add_rowwise(m, v) -> Tensor:
    """Add vector ``v`` (length c) to every row of matrix ``m`` (r x c)."""
    m, v = _as_tensor(m), _as_tensor(v)
    if m.value.ndim != 2 or v.value.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError("add_rowwise", m.shape, v.shape)

    def bw(g):
        return g, g.sum(axis=0)

    return _node(m.value + v.value, (m, v), bw)


# ---------------------------------------------------------------------------
# elementwise unary ops


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = _stable_sigmoid(a.value)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.value <= 0.0):
        raise DomainError("log: input must be strictly positive")
    return _node(np.log(a.value), (a,), lambda g: (g / a.value,))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.value)
    return _node(out, (a,), lambda g: (g * out,))


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.value < 0.0):
        raise DomainError("sqrt: input must be nonnegative")
    out = np.sqrt(a.value)
    return _node(out, (a,), lambda g: (g * 0.5 / out,))


def softplus(a) -> Tensor:
    """log(1 + exp(x)), evaluated without overflow."""
    a = _as_tensor(a)
    out = np.logaddexp(0.0, a.value)
    return _node(out, (a,), lambda g: (g * _stable_sigmoid(a.value),))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = (a.value > 0.0).astype(np.float64)
    return _node(a.value * mask, (a,), lambda g: (g * mask,))


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.value)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


# ---------------------------------------------------------------------------
# reductions and vector ops


def sum(a, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = _as_tensor(a)
    out = a.value.sum(axis=axis)

    def bw(g):
        if axis is None:
            return (np.full(a.shape, float(g)),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _node(out, (a,), bw)


def mean(a, axis: int | None = None) -> Tensor:
    a = _as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis), 1.0 / n)


def softmax(a) -> Tensor:
    a = _as_tensor(a)
    if a.value.ndim != 1:
        raise ShapeError("softmax", a.shape, ("n",))
    z = np.exp(a.value - a.value.max())
    out = z / z.sum()

    def bw(g):
        return (out * (g - np.dot(g, out)),)

    return _node(out, (a,), bw)


def dot(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.ndim != 1 or a.shape != b.shape:
        raise ShapeError("dot", a.shape, b.shape)
    return _node(np.dot(a.value, b.value), (a, b), lambda g: (g * b.value, g * a.value))


def l2_norm(a, axis: int | None = None) -> Tensor:
    """Euclidean norm over all entries, or per slice along ``axis``."""
    a = _as_tensor(a)
    return sqrt(sum(mul(a, a), axis=axis))


def concat(parts: Sequence, axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ValueError("concat: need at least one tensor")
    ref = parts[0].shape
    for p in parts[1:]:
        if len(p.shape) != len(ref) or any(
            s != r for i, (s, r) in enumerate(zip(p.shape, ref)) if i != axis
        ):
            raise ShapeError("concat", ref, p.shape)
    out = np.concatenate([p.value for p in parts], axis=axis)
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _node(out, tuple(parts), bw)


def take(a, index: int) -> Tensor:
    """Select entry ``index`` of a 1-D tensor as a 0-d tensor."""
    a = _as_tensor(a)
    if a.value.ndim != 1:
        raise ShapeError("take", a.shape, ("n",))

    def bw(g):
        out = np.zeros(a.shape)
        out[index] = g
        return (out,)

    return _node(a.value[index], (a,), bw)


# ---------------------------------------------------------------------------
# backward pass


def _topological(root: Tensor) -> list[Tensor]:
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
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> dict[Tensor, np.ndarray]:
    """Accumulate d(root)/d(leaf) into every leaf with ``requires_grad``.

    Returns a map from each reached leaf to the gradient contributed by this
    call. Leaf ``.grad`` buffers accumulate across calls until zeroed.
    """
    if root.size != 1:
        raise ValueError(f"backward: root must be scalar, got shape {root.shape}")
    grads: dict[int, np.ndarray] = {id(root): np.ones(root.shape)}
    contributed: dict[Tensor, np.ndarray] = {}
    for node in reversed(_topological(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            if node.requires_grad:
                node.grad = node.grad + g
                contributed[node] = g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not _tracks(parent):
                continue
            pg = np.asarray(pg, dtype=np.float64).reshape(parent.shape)
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    return contributed


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = np.zeros_like(p.value)
