"""Reverse-mode automatic differentiation on dense numpy arrays.

A :class:`Tensor` wraps an ``ndarray`` together with an optional gradient
buffer and, for tensors produced by an operation, a record of the producing
operation (parents + backward closure).  Calling :func:`backward` on a
scalar tensor walks the graph in reverse topological order and accumulates
``dLoss/dLeaf`` into every reachable leaf that has ``requires_grad`` set.

The op set is deliberately small: exactly the primitives the network needs.
Float32 is the training dtype; float64 graphs are supported for gradient
checking (the dtype of a graph is inherited from its leaves).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for an operation."""


class Tensor:
    """A dense array with optional gradient and graph linkage.

    Leaves are created directly (``Tensor(data, requires_grad=...)``) and
    have no producing operation.  Tensors returned by ops carry a parent
    tuple and a backward closure; their ``requires_grad`` is inherited from
    the parents.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = ""
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @classmethod
    def _node(cls, data: np.ndarray, parents: tuple["Tensor", ...], op: str) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        out.op = op
        out._parents = parents
        out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        """Reset the gradient buffer to zeros (allocating it if absent)."""
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def __repr__(self) -> str:
        tag = f", op={self.op!r}" if self.op else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    # operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# elementary operations ----------------------------------------------------


def add(a, b) -> Tensor:
    """Elementwise sum with numpy broadcasting."""
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast")
    out = Tensor._node(data, (a, b), "add")
    out._backward = lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))
    return out


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    """Sum of same-shaped tensors as a single graph node."""
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("add_n requires at least one tensor")
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ShapeError(f"add_n: shapes {shape} and {t.shape} differ")
    data = tensors[0].data.copy()
    for t in tensors[1:]:
        data += t.data
    out = Tensor._node(data, tuple(tensors), "add_n")
    out._backward = lambda g: tuple(g for _ in tensors)
    return out


def mul(a, b) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")
    out = Tensor._node(data, (a, b), "mul")
    out._backward = lambda g: (
        _unbroadcast(g * b.data, a.data.shape),
        _unbroadcast(g * a.data, b.data.shape),
    )
    return out


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    x = _as_tensor(x)
    c = float(c)
    out = Tensor._node(x.data * c, (x,), "scale")
    out._backward = lambda g: (g * c,)
    return out


def matmul(a, b) -> Tensor:
    """Matrix product: 2-D @ 2-D or 1-D @ 2-D."""
    a, b = _as_tensor(a), _as_tensor(b)
    if b.data.ndim != 2 or a.data.ndim not in (1, 2):
        raise ShapeError(f"matmul: unsupported ranks {a.shape} @ {b.shape}")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    out = Tensor._node(a.data @ b.data, (a, b), "matmul")
    if a.data.ndim == 2:
        out._backward = lambda g: (g @ b.data.T, a.data.T @ g)
    else:
        out._backward = lambda g: (g @ b.data.T, np.outer(a.data, g))
    return out


def transpose(x: Tensor) -> Tensor:
    """2-D transpose."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"transpose: expected 2-D tensor, got shape {x.shape}")
    out = Tensor._node(x.data.T, (x,), "transpose")
    out._backward = lambda g: (g.T,)
    return out


def concat_last(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last dimension; other dims must match."""
    tensors = [_as_tensor(t) for t in tensors]
    lead = tensors[0].shape[:-1]
    for t in tensors[1:]:
        if t.shape[:-1] != lead:
            raise ShapeError(
                f"concat-last-dim: leading dims differ, {tensors[0].shape} vs {t.shape}"
            )
    widths = [t.shape[-1] for t in tensors]
    out = Tensor._node(np.concatenate([t.data for t in tensors], axis=-1), tuple(tensors), "concat")
    splits = np.cumsum(widths)[:-1]

    def _bw(g):
        return tuple(np.split(g, splits, axis=-1))

    out._backward = _bw
    return out


def vstack(tensors: Sequence[Tensor]) -> Tensor:
    """Stack along the first dimension; 1-D inputs become single rows."""
    tensors = [_as_tensor(t) for t in tensors]
    rows = [1 if t.data.ndim == 1 else t.data.shape[0] for t in tensors]
    out = Tensor._node(np.vstack([t.data for t in tensors]), tuple(tensors), "vstack")
    bounds = np.cumsum(rows)

    def _bw(g):
        grads = []
        start = 0
        for t, stop in zip(tensors, bounds):
            piece = g[start:stop]
            grads.append(piece[0] if t.data.ndim == 1 else piece)
            start = stop
        return tuple(grads)

    out._backward = _bw
    return out


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``x @ w + b`` — the linear-layer primitive."""
    return add(matmul(x, w), b)


def take(x: Tensor, idx) -> Tensor:
    """Basic indexing (ints and slices) with gradient scatter-back."""
    x = _as_tensor(x)
    out = Tensor._node(x.data[idx], (x,), "take")

    def _bw(g):
        gx = np.zeros_like(x.data)
        gx[idx] = g
        return (gx,)

    out._backward = _bw
    return out


def gather_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``table[ids]`` for an integer id vector (embedding fetch)."""
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1 or table.data.ndim != 2:
        raise ShapeError(f"gather_rows: need 1-D ids and 2-D table, got {ids.shape}, {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError(f"gather_rows: id out of range for table with {table.data.shape[0]} rows")
    out = Tensor._node(table.data[ids], (table,), "gather")

    def _bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    out._backward = _bw
    return out


def tile_rows(v: Tensor, n: int) -> Tensor:
    """Copy a vector into ``n`` identical rows (expand-and-repeat)."""
    v = _as_tensor(v)
    if v.data.ndim != 1:
        raise ShapeError(f"tile_rows: expected a vector, got shape {v.shape}")
    out = Tensor._node(np.tile(v.data, (n, 1)), (v,), "tile_rows")
    out._backward = lambda g: (g.sum(axis=0),)
    return out


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = Tensor._node(np.maximum(x.data, 0), (x,), "relu")
    out._backward = lambda g: (g * (x.data > 0),)
    return out


def sum_all(x: Tensor) -> Tensor:
    """Sum of every element, as a scalar tensor."""
    x = _as_tensor(x)
    out = Tensor._node(np.asarray(x.data.sum(), dtype=x.data.dtype), (x,), "sum")
    out._backward = lambda g: (np.broadcast_to(g, x.data.shape).astype(x.data.dtype, copy=False),)
    return out


def mean_of(tensors: Sequence[Tensor]) -> Tensor:
    """Arithmetic mean of same-shaped tensors (batch reduction helper)."""
    return scale(add_n(tensors), 1.0 / len(tensors))


# normalization, masking, regularization ------------------------------------


def softmax_masked(x: Tensor, mask) -> Tensor:
    """Row softmax over the last dimension restricted to valid positions.

    ``mask`` is a validity vector over the last dimension (shared by all
    rows): 1/True marks valid positions.  Masked positions are exactly zero
    in the output and receive zero gradient.  Raises if no position is
    valid (the distribution would be undefined).
    """
    x = _as_tensor(x)
    valid = np.asarray(mask).astype(bool)
    if valid.shape != (x.data.shape[-1],):
        raise ShapeError(
            f"softmax_masked: mask length {valid.shape} does not match last dim of {x.shape}"
        )
    if not valid.any():
        raise ValueError("softmax_masked: all positions masked, distribution undefined")
    vals = x.data[..., valid]
    shifted = x.data - vals.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    e[..., ~valid] = 0.0
    p = e / e.sum(axis=-1, keepdims=True)
    out = Tensor._node(p, (x,), "softmax")
    out._backward = lambda g: (p * (g - (g * p).sum(axis=-1, keepdims=True)),)
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row of the last dimension to zero mean / unit variance,
    then apply the learned elementwise gain and bias."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    n = x.data.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError(
            f"layer_norm: gain/bias shapes {gain.shape}/{bias.shape} do not match last dim {n}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = Tensor._node(xhat * gain.data + bias.data, (x, gain, bias), "layer_norm")

    def _bw(g):
        reduce_axes = tuple(range(g.ndim - 1))
        g_gain = (g * xhat).sum(axis=reduce_axes) if g.ndim > 1 else g * xhat
        g_bias = g.sum(axis=reduce_axes) if g.ndim > 1 else g
        g_hat = g * gain.data
        gx = inv_std * (
            g_hat
            - g_hat.mean(axis=-1, keepdims=True)
            - xhat * (g_hat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, g_gain, g_bias

    out._backward = _bw
    return out


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability ``rate`` and rescale survivors
    by ``1/(1-rate)`` during training; identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = _as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode requires a seeded rng")
    keep = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    keep = keep.astype(x.data.dtype)
    out = Tensor._node(x.data * keep, (x,), "dropout")
    out._backward = lambda g: (g * keep,)
    return out


# losses --------------------------------------------------------------------


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """Negative log softmax probability of ``target`` for a 1-D logit vector."""
    logits = _as_tensor(logits)
    if logits.data.ndim != 1:
        raise ShapeError(f"cross_entropy: expected 1-D logits, got shape {logits.shape}")
    n = logits.data.shape[0]
    target = int(target)
    if not 0 <= target < n:
        raise IndexError(f"cross_entropy: target {target} out of range for {n} classes")
    shifted = logits.data - logits.data.max()
    lse = np.log(np.exp(shifted).sum())
    loss = lse - shifted[target]
    p = np.exp(shifted - lse)
    out = Tensor._node(np.asarray(loss, dtype=logits.data.dtype), (logits,), "cross_entropy")

    def _bw(g):
        gx = p.copy()
        gx[target] -= 1.0
        return (gx * g,)

    out._backward = _bw
    return out


def cross_entropy_rows(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Sum of per-row cross entropies for 2-D logits and an int target per row."""
    logits = _as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or targets.shape != (logits.data.shape[0],):
        raise ShapeError(
            f"cross_entropy_rows: logits {logits.shape} need one target per row, got {targets.shape}"
        )
    n = logits.data.shape[1]
    if targets.size and (targets.min() < 0 or targets.max() >= n):
        raise IndexError(f"cross_entropy_rows: target out of range for {n} classes")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(targets.shape[0])
    loss = (lse[rows, 0] - shifted[rows, targets]).sum()
    p = np.exp(shifted - lse)
    out = Tensor._node(np.asarray(loss, dtype=logits.data.dtype), (logits,), "cross_entropy_rows")

    def _bw(g):
        gx = p.copy()
        gx[rows, targets] -= 1.0
        return (gx * g,)

    out._backward = _bw
    return out


def binary_cross_entropy(logits: Tensor, targets, n: int) -> Tensor:
    """Sigmoid binary cross entropy summed over all elements, divided by ``n``.

    Computed in the numerically stable form ``softplus(x) - x*y`` so large
    logits never produce log-of-zero.  ``n`` is the number of contributing
    elements and may cover a whole batch (callers add per-utterance terms
    that share one divisor).
    """
    logits = _as_tensor(logits)
    y = np.asarray(targets, dtype=logits.data.dtype)
    if y.shape != logits.data.shape:
        raise ShapeError(f"binary_cross_entropy: targets {y.shape} vs logits {logits.shape}")
    if n <= 0:
        raise ValueError(f"binary_cross_entropy: element count must be positive, got {n}")
    x = logits.data
    loss = (np.logaddexp(0.0, x) - x * y).sum() / n
    out = Tensor._node(np.asarray(loss, dtype=x.dtype), (logits,), "bce")

    def _bw(g):
        sig = 1.0 / (1.0 + np.exp(-x))
        return ((sig - y) * (g / n),)

    out._backward = _bw
    return out


# backward engine ------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Populate leaf gradients of every reachable ``requires_grad`` leaf.

    The loss must be scalar.  Leaf gradients accumulate across calls; use
    ``ParamSet.zero_grads`` (or ``Tensor.zero_grad``) between steps.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited and p.requires_grad:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._parents:
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        elif node.requires_grad:
            if node.grad is None:
                node.grad = np.array(g, copy=True)
            else:
                node.grad += g
