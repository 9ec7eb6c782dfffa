"""Small reverse-mode autodiff over float64 numpy arrays.

Only what the encoder and the contrastive losses need is here. Binary ops
accept equal shapes or a scalar operand; row/column broadcasting is done
explicitly with :func:`expand` so every gradient path stays easy to audit.

    >>> x = Tensor([0.0, 1.0], requires_grad=True)
    >>> y = exp(x).sum()
    >>> g = backward(y)
    >>> g[x]
    array([1.        , 2.71828183])
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class Tensor:
    """A node in the computation graph.

    ``data`` always holds a C-contiguous float64 array. Nodes created from
    inputs that do not require gradients are plain constants and record
    nothing.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")
    __array_ufunc__ = None  # ndarray <op> Tensor defers to the Tensor operator

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (),
                 _backward: Callable | None = None, op: str = "leaf"):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr if arr.ndim == 0 or arr.flags.c_contiguous else np.ascontiguousarray(arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.data.shape[0]

    # operator sugar
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __neg__(self): return scale(self, -1.0)
    def __matmul__(self, other): return matmul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, reciprocal(other))
        return scale(self, 1.0 / float(other))

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None): return tensor_sum(self, axis)
    def mean(self, axis=None): return mean(self, axis)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward_fn, op)
    return Tensor(data, op=op)


def _is_scalar(t: Tensor) -> bool:
    return t.data.ndim == 0


def _check_binary(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(g: np.ndarray, t: Tensor) -> np.ndarray:
    return np.asarray(g.sum()) if _is_scalar(t) and g.ndim else g


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "add")
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "sub")
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "mul")
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a), _unbroadcast(g * a.data, b)), "mul")


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _node(a.data * c, (a,), lambda g: (g * c,), "scale")


def reciprocal(a) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / a.data
    return _node(out, (a,), lambda g: (-g * out * out,), "reciprocal")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log: input has non-positive entries")
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def square(a) -> Tensor:
    a = as_tensor(a)
    return _node(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt: input has negative entries")
    out = np.sqrt(a.data)
    return _node(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def softplus(a) -> Tensor:
    """log(1 + exp(x)) without overflow."""
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)
    return _node(out, (a,), lambda g: (g * _sigmoid(a.data),), "softplus")


def log_sigmoid(a) -> Tensor:
    return scale(softplus(scale(a, -1.0)), -1.0)


def maximum_scalar(a, c: float) -> Tensor:
    """max(a, c) elementwise; subgradient 0 at ties."""
    a = as_tensor(a)
    mask = a.data > c
    return _node(np.where(mask, a.data, c), (a,), lambda g: (g * mask,), "maximum")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _node(a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {a.shape}")
    return _node(a.data.T, (a,), lambda g: (g.T,), "transpose")


# ---------------------------------------------------------------- reductions

def tensor_sum(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, shape),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape),)

    return _node(a.data.sum(axis=axis), (a,), back, "sum")


def mean(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return scale(tensor_sum(a, axis), 1.0 / n)


def logsumexp(a, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Stable log-sum-exp along ``axis``.

    ``mask`` (same shape as ``a``) selects which entries take part; every
    reduced slice must keep at least one entry.
    """
    a = as_tensor(a)
    x = a.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError(f"logsumexp: mask shape {mask.shape} != input shape {x.shape}")
        if not mask.any(axis=axis).all():
            raise ValueError("logsumexp: a reduced slice has no unmasked entries")
        x = np.where(mask, x, -np.inf)
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (np.log(s) + m).squeeze(axis)
    softmax = e / s

    def back(g):
        return (np.expand_dims(g, axis) * softmax,)

    return _node(out, (a,), back, "logsumexp")


# ---------------------------------------------------------------- structure

def expand(a, axis: int, n: int) -> Tensor:
    """Insert a new axis at ``axis`` and repeat ``n`` times along it."""
    a = as_tensor(a)
    out = np.repeat(np.expand_dims(a.data, axis), n, axis=axis)
    return _node(out, (a,), lambda g: (g.sum(axis=axis),), "expand")


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def take_rows(a, index) -> Tensor:
    """``a[index]`` along the first axis; repeated indices accumulate."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)
    shape = a.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return _node(a.data[index], (a,), back, "take_rows")


def gather(a, rows, cols) -> Tensor:
    """Fancy-index a matrix: ``a[rows, cols]`` with broadcasting index arrays."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"gather: expected a matrix, got shape {a.shape}")
    rows, cols = np.broadcast_arrays(np.asarray(rows, np.intp), np.asarray(cols, np.intp))
    shape = a.shape
    flat = (rows * shape[1] + cols).ravel()

    def back(g):
        acc = np.bincount(flat, weights=g.ravel(), minlength=shape[0] * shape[1])
        return (acc.reshape(shape),)

    return _node(a.data[rows, cols], (a,), back, "gather")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _node(np.concatenate([t.data for t in ts], axis=axis), ts,
                 lambda g: tuple(np.split(g, sizes, axis=axis)), "concat")


# ---------------------------------------------------------------- backward

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor, wrt: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Reverse sweep from a scalar ``root``.

    Returns a map from leaf tensors to d(root)/d(leaf). Leaves listed in
    ``wrt`` that the root does not depend on get exact zeros. Each leaf's
    ``.grad`` is set to its gradient from this sweep.
    """
    if root.data.ndim != 0 and root.data.size != 1:
        raise ValueError(f"backward: root must be a scalar, got shape {root.shape}")
    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    leaves: dict[Tensor, np.ndarray] = {}
    if root.requires_grad:
        for node in reversed(_topo_order(root)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                leaves[node] = leaves.get(node, 0) + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad:
                    continue
                pid = id(parent)
                grads[pid] = grads[pid] + pg if pid in grads else np.array(pg, dtype=np.float64)
    for leaf in wrt or ():
        leaves.setdefault(leaf, np.zeros_like(leaf.data))
    for leaf, g in leaves.items():
        g = np.broadcast_to(g, leaf.shape).astype(np.float64)
        leaves[leaf] = g
        leaf.grad = g
    return leaves


def grad(fn: Callable[..., Tensor], *inputs: np.ndarray) -> list[np.ndarray]:
    """Gradient of scalar ``fn(*tensors)`` w.r.t. each numpy input."""
    leaves = [Tensor(np.array(x, dtype=np.float64), requires_grad=True) for x in inputs]
    g = backward(fn(*leaves), wrt=leaves)
    return [g[t] for t in leaves]
