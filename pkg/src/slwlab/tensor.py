"""Dense float64 tensors with reverse-mode automatic differentiation.

Just enough machinery to express a small GPT decoder and get exact
gradients: values are numpy arrays, every op records a backward closure,
and ``backward`` walks the graph once in reverse topological order.
Evaluation order is fixed, so repeated backward passes over the same
graph are bit-identical.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeError

_GELU_C = math.sqrt(2.0 / math.pi)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A float64 array plus the autodiff bookkeeping for it."""

    __slots__ = ("data", "requires_grad", "grad", "_backward", "_parents", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph construction ------------------------------------------------

    @staticmethod
    def _result(data, parents, backward):
        needs_grad = any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=needs_grad)
        if needs_grad:
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accum(self, grad: np.ndarray):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self):
        """Backpropagate from this scalar through the recorded graph."""
        if self.data.size != 1:
            raise ShapeError(
                f"backward requires a scalar loss, got shape {self.data.shape}"
            )
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        # Fresh gradients for every node reachable from the loss.
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- primitive ops ---------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def backward(grad):
        a._accum(_unbroadcast(grad, a.data.shape))
        b._accum(_unbroadcast(grad, b.data.shape))

    return Tensor._result(out_data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def backward(grad):
        a._accum(_unbroadcast(grad * b.data, a.data.shape))
        b._accum(_unbroadcast(grad * a.data, b.data.shape))

    return Tensor._result(out_data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)

    def backward(grad):
        a._accum(grad * c)

    return Tensor._result(a.data * c, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; the last two axes multiply, leading axes broadcast."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul shape mismatch: {a.data.shape} x {b.data.shape}"
        )
    out_data = np.matmul(a.data, b.data)

    def backward(grad):
        ga = np.matmul(grad, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), grad)
        a._accum(_unbroadcast(ga, a.data.shape))
        b._accum(_unbroadcast(gb, b.data.shape))

    return Tensor._result(out_data, (a, b), backward)


def transpose(a: Tensor, axes: tuple) -> Tensor:
    a = _as_tensor(a)
    inv = np.argsort(axes)

    def backward(grad):
        a._accum(np.transpose(grad, inv))

    return Tensor._result(np.transpose(a.data, axes), (a,), backward)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    a = _as_tensor(a)
    old_shape = a.data.shape

    def backward(grad):
        a._accum(grad.reshape(old_shape))

    return Tensor._result(a.data.reshape(shape), (a,), backward)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis; backward pads with zeros."""
    a = _as_tensor(a)
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def backward(grad):
        full = np.zeros_like(a.data)
        full[index] = grad
        a._accum(full)

    return Tensor._result(a.data[index], (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    a = _as_tensor(a)

    def backward(grad):
        a._accum(np.full_like(a.data, float(grad)))

    return Tensor._result(a.data.sum(), (a,), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Softmax along `axis`, computed with max-subtraction for stability."""
    a = _as_tensor(a)
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    out_data = exp / exp.sum(axis=axis, keepdims=True)

    def backward(grad):
        dot = (grad * out_data).sum(axis=axis, keepdims=True)
        a._accum(out_data * (grad - dot))

    return Tensor._result(out_data, (a,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last dimension to mean 0 / variance 1, then affine."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    if gain.data.shape != x.data.shape[-1:] or bias.data.shape != x.data.shape[-1:]:
        raise ShapeError(
            f"layer_norm gain/bias {gain.data.shape}/{bias.data.shape} "
            f"do not match last dim of {x.data.shape}"
        )
    n = x.data.shape[-1]
    mean = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out_data = xhat * gain.data + bias.data

    def backward(grad):
        gain._accum((grad * xhat).reshape(-1, n).sum(axis=0))
        bias._accum(grad.reshape(-1, n).sum(axis=0))
        gx = grad * gain.data
        # d xhat/dx folded analytically.
        dx = inv_std * (
            gx
            - gx.mean(axis=-1, keepdims=True)
            - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
        )
        x._accum(dx)

    return Tensor._result(out_data, (x, gain, bias), backward)


def gelu(a: Tensor) -> Tensor:
    """GELU with the tanh approximation."""
    a = _as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    tanh = np.tanh(inner)
    out_data = 0.5 * x * (1.0 + tanh)

    def backward(grad):
        sech2 = 1.0 - tanh * tanh
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        a._accum(grad * (0.5 * (1.0 + tanh) + 0.5 * x * sech2 * d_inner))

    return Tensor._result(out_data, (a,), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup into `table`; backward scatters with np.add.at."""
    table = _as_tensor(table)
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError(
            f"token id out of range [0, {table.data.shape[0]}): "
            f"min={ids.min()}, max={ids.max()}"
        )
    out_data = table.data[ids]

    def backward(grad):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, grad)
        table._accum(full)

    return Tensor._result(out_data, (table,), backward)


def dropout(a: Tensor, p: float = 0.0, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout. p=0 (the default everywhere) is the identity."""
    a = _as_tensor(a)
    if p == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout with p > 0 requires an explicit rng")
    mask = (rng.random(a.data.shape) >= p) / (1.0 - p)

    def backward(grad):
        a._accum(grad * mask)

    return Tensor._result(a.data * mask, (a,), backward)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean of -log softmax(logits)[target] over rows of an [N, V] tensor."""
    logits = _as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or targets.shape != (logits.data.shape[0],):
        raise ShapeError(
            f"cross_entropy expects [N, V] logits and N targets, got "
            f"{logits.data.shape} and {targets.shape}"
        )
    n, v = logits.data.shape
    if targets.size and (targets.min() < 0 or targets.max() >= v):
        raise IndexError(
            f"target out of range [0, {v}): min={targets.min()}, max={targets.max()}"
        )
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    nll = lse - shifted[rows, targets]
    out_data = nll.mean()

    def backward(grad):
        probs = np.exp(shifted - lse[:, None])
        probs[rows, targets] -= 1.0
        logits._accum(probs * (float(grad) / n))

    return Tensor._result(out_data, (logits,), backward)
