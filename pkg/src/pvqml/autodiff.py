"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Operations record onto the active :class:`Tape` (``with Tape() as tape:``).
Outside a tape they only compute values, which is what inference uses.

Tensors are vectors ``[n]`` or row batches ``[batch, n]``; the op set is
exactly what the forecasting models need (affine maps, elementwise
activations and arithmetic, concatenation/splitting, quantum layers via
:func:`custom`).
"""
from __future__ import annotations

import itertools
import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, ShapeError

_ids = itertools.count()
_local = threading.local()


def _active_tape():
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("values", "grad", "node_id", "requires_grad", "name")

    def __init__(self, values, requires_grad=False, name=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.node_id = next(_ids)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    def __len__(self):
        return self.values.shape[-1]

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return sub(self, other)


def tensor(values, requires_grad=False, name=None) -> Tensor:
    return Tensor(values, requires_grad=requires_grad, name=name)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of operations; inputs are always recorded before consumers."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        if not hasattr(_local, "stack"):
            _local.stack = []
        _local.stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False

    def record(self, inputs, output, backward):
        self.nodes.append(_Node(tuple(inputs), output, backward))

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        return backward(self, loss)


def custom(inputs: Sequence[Tensor], values, backward_fn: Callable) -> Tensor:
    """Create an output node with a hand-written backward rule.

    ``backward_fn(grad_out)`` must return one gradient (or ``None``) per input.
    """
    out = Tensor(values)
    out.requires_grad = any(t.requires_grad for t in inputs)
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape.record(inputs, out, backward_fn)
    return out


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Propagate d(loss) back through ``tape``; fills ``.grad`` on leaf tensors.

    Returns ``{node_id: grad}`` for every leaf that received a gradient.
    """
    if loss.values.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = {loss.node_id: np.ones_like(loss.values)}
    produced = set()
    for node in reversed(tape.nodes):
        produced.add(node.output.node_id)
        g = grads.pop(node.output.node_id, None)
        if g is None:
            continue
        for t, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not t.requires_grad:
                continue
            if t.node_id in grads:
                grads[t.node_id] = grads[t.node_id] + gi
            else:
                grads[t.node_id] = gi
    leaves = {}
    seen = set()
    for node in tape.nodes:
        for t in node.inputs:
            if t.node_id in seen or t.node_id in produced:
                continue
            seen.add(t.node_id)
            if t.node_id in grads:
                t.grad = grads[t.node_id] if t.grad is None else t.grad + grads[t.node_id]
                leaves[t.node_id] = grads[t.node_id]
    if loss.requires_grad and loss.node_id not in produced:
        loss.grad = np.ones_like(loss.values)
        leaves[loss.node_id] = loss.grad
    return leaves


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not conform")


def affine(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ W.T + b`` for a vector or a row batch ``x``."""
    x, W = _wrap(x), _wrap(W)
    if W.values.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise ShapeError(f"affine: input width {x.shape[-1]} vs weight shape {W.shape}")
    if b is not None:
        b = _wrap(b)
        if b.shape != (W.shape[0],):
            raise ShapeError(f"affine: bias shape {b.shape} vs {W.shape[0]} outputs")
    out = x.values @ W.values.T
    if b is not None:
        out = out + b.values
    xv, Wv = x.values, W.values

    def back(g):
        gx = g @ Wv
        gW = np.outer(g, xv) if g.ndim == 1 else g.T @ xv
        if b is None:
            return gx, gW
        return gx, gW, (g if g.ndim == 1 else g.sum(axis=0))

    return custom((x, W) if b is None else (x, W, b), out, back)


def sigmoid(x: Tensor) -> Tensor:
    x = _wrap(x)
    s = 0.5 * (1.0 + np.tanh(0.5 * x.values))
    return custom((x,), s, lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    x = _wrap(x)
    t = np.tanh(x.values)
    return custom((x,), t, lambda g: (g * (1.0 - t * t),))


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    if kind == "identity":
        return _wrap(x)
    raise ValueError(f"unknown activation {kind!r}")


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _same_shape(a, b, "add")
    return custom((a, b), a.values + b.values, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _same_shape(a, b, "sub")
    return custom((a, b), a.values - b.values, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _same_shape(a, b, "mul")
    av, bv = a.values, b.values
    return custom((a, b), av * bv, lambda g: (g * bv, g * av))


def scale(x: Tensor, factor) -> Tensor:
    """Multiply by a constant array/scalar that does not need a gradient."""
    x = _wrap(x)
    factor = np.asarray(factor, dtype=np.float64)
    return custom((x,), x.values * factor, lambda g: (g * factor,))


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    parts = [_wrap(p) for p in parts]
    lead = {p.shape[:-1] for p in parts}
    if len(lead) != 1:
        raise ShapeError(f"concat: leading shapes differ {sorted(lead)}")
    widths = [p.shape[-1] for p in parts]
    bounds = np.cumsum([0] + widths)

    def back(g):
        return tuple(g[..., bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return custom(parts, np.concatenate([p.values for p in parts], axis=-1), back)


def slice_(x: Tensor, start: int, stop: int) -> Tensor:
    """Columns ``[start, stop)`` of the last axis."""
    x = _wrap(x)
    width = x.shape[-1]
    if not 0 <= start < stop <= width:
        raise ShapeError(f"slice [{start}, {stop}) out of range for width {width}")

    def back(g):
        full = np.zeros_like(x.values)
        full[..., start:stop] = g
        return (full,)

    return custom((x,), x.values[..., start:stop], back)


def split(x: Tensor, groups: int) -> list[Tensor]:
    """Split the last axis into ``groups`` equal consecutive pieces."""
    x = _wrap(x)
    width = x.shape[-1]
    if groups < 1 or width % groups:
        raise ShapeError(f"cannot split width {width} into {groups} equal groups")
    size = width // groups
    return [slice_(x, i * size, (i + 1) * size) for i in range(groups)]


def mean_squared_error(pred: Tensor, target) -> Tensor:
    """Scalar ``mean((pred - target)**2)`` over all elements."""
    pred = _wrap(pred)
    target = np.asarray(target.values if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"mse: prediction shape {pred.shape} vs target {target.shape}")
    diff = pred.values - target
    n = diff.size
    return custom((pred,), np.array(np.mean(diff * diff)), lambda g: (g * 2.0 * diff / n,))


def total(x: Tensor) -> Tensor:
    """Sum of all elements as a scalar."""
    x = _wrap(x)
    return custom((x,), np.array(x.values.sum()), lambda g: (np.full_like(x.values, g),))
