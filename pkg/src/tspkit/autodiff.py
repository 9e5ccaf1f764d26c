"""Minimal reverse-mode autodiff over dense 2-D arrays.

Just enough machinery for the policy network and REINFORCE: a tape of
recorded primitives with exact analytic backward rules.  Masking is carried
explicitly by masked_softmax (no -inf written into logits), so masked
entries get probability exactly 0 and gradient exactly 0.

All primitives accept tape=None, in which case they compute forward values
only; that is the cheap inference path.
"""
from __future__ import annotations

import numpy as np

from .core import InvalidArgument, TspError


class InvalidState(TspError):
    pass


class Tensor:
    """Dense float64 matrix with an optional gradient accumulator."""

    __slots__ = ("value", "grad", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        v = np.asarray(value, dtype=np.float64)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        elif v.ndim == 1:
            v = v.reshape(1, -1)
        elif v.ndim != 2:
            raise InvalidArgument(f"tensors are 2-D, got shape {v.shape}")
        self.value = v
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None


class _Node:
    __slots__ = ("out", "backward")

    def __init__(self, out, backward):
        self.out = out
        self.backward = backward


class Tape:
    """Topologically ordered record of primitive applications."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._outputs: set[int] = set()

    def record(self, out: Tensor, backward) -> None:
        self.nodes.append(_Node(out, backward))
        self._outputs.add(id(out))

    def produced(self, t: Tensor) -> bool:
        return id(t) in self._outputs


def _finite(v: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(v)):
        raise InvalidState(f"non-finite values out of {op}")
    return v


def _emit(tape: Tape | None, value: np.ndarray, op: str, backward) -> Tensor:
    out = Tensor(_finite(value, op))
    if tape is not None:
        tape.record(out, backward)
    return out


def matmul(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise InvalidArgument(f"matmul shape mismatch {a.shape} x {b.shape}")
    out_holder = []

    def backward():
        g = out_holder[0].grad
        a.accumulate(g @ b.value.T)
        b.accumulate(a.value.T @ g)

    out = _emit(tape, a.value @ b.value, "matmul", backward)
    out_holder.append(out)
    return out


def row_broadcast_add(tape: Tape | None, a: Tensor, row: Tensor) -> Tensor:
    if row.shape[0] != 1 or row.shape[1] != a.shape[1]:
        raise InvalidArgument(f"row_broadcast_add shape mismatch {a.shape} + {row.shape}")
    out_holder = []

    def backward():
        g = out_holder[0].grad
        a.accumulate(g)
        row.accumulate(g.sum(axis=0, keepdims=True))

    out = _emit(tape, a.value + row.value, "row_broadcast_add", backward)
    out_holder.append(out)
    return out


def scalar_mix(tape: Tape | None, lam: Tensor, a: Tensor, b: Tensor) -> Tensor:
    """lam*a + (1-lam)*b with lam a 1x1 tensor."""
    if lam.shape != (1, 1):
        raise InvalidArgument("scalar_mix weight must be 1x1")
    if a.shape != b.shape:
        raise InvalidArgument(f"scalar_mix shape mismatch {a.shape} vs {b.shape}")
    lv = lam.item()
    out_holder = []

    def backward():
        g = out_holder[0].grad
        a.accumulate(lv * g)
        b.accumulate((1.0 - lv) * g)
        lam.accumulate(np.array([[((a.value - b.value) * g).sum()]]))

    out = _emit(tape, lv * a.value + (1.0 - lv) * b.value, "scalar_mix", backward)
    out_holder.append(out)
    return out


def tanh(tape: Tape | None, a: Tensor) -> Tensor:
    out_holder = []

    def backward():
        out = out_holder[0]
        a.accumulate(out.grad * (1.0 - out.value * out.value))

    out = _emit(tape, np.tanh(a.value), "tanh", backward)
    out_holder.append(out)
    return out


def relu(tape: Tape | None, a: Tensor) -> Tensor:
    out_holder = []

    def backward():
        a.accumulate(out_holder[0].grad * (a.value > 0.0))

    out = _emit(tape, np.maximum(a.value, 0.0), "relu", backward)
    out_holder.append(out)
    return out


def row_mean_excluding_self(tape: Tape | None, a: Tensor) -> Tensor:
    """Row i becomes the mean of all other rows; needs at least 2 rows."""
    n = a.shape[0]
    if n < 2:
        raise InvalidState("row_mean_excluding_self needs at least 2 rows")
    out_holder = []

    def backward():
        g = out_holder[0].grad
        a.accumulate((g.sum(axis=0, keepdims=True) - g) / (n - 1))

    # sort each column before summing so the result is bit-identical under
    # any row permutation of the input (exact aggregation equivariance)
    col_sum = np.sort(a.value, axis=0).sum(axis=0, keepdims=True)
    value = (col_sum - a.value) / (n - 1)
    out = _emit(tape, value, "row_mean_excluding_self", backward)
    out_holder.append(out)
    return out


def masked_softmax(tape: Tape | None, u: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax of the column vector u over rows where mask is True.

    Masked rows get probability exactly 0 and never contribute a gradient.
    """
    if u.shape[1] != 1:
        raise InvalidArgument("masked_softmax expects a column vector")
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if mask.shape[0] != u.shape[0]:
        raise InvalidArgument("mask length does not match logits")
    if not mask.any():
        raise InvalidState("all entries masked in masked_softmax")
    z = u.value[mask, 0]
    e = np.exp(z - z.max())
    p = np.zeros_like(u.value)
    p[mask, 0] = e / e.sum()
    out_holder = []

    def backward():
        g = out_holder[0].grad
        pm = out_holder[0].value[mask, 0]
        gm = g[mask, 0]
        gu = np.zeros_like(u.value)
        gu[mask, 0] = pm * (gm - float(gm @ pm))
        u.accumulate(gu)

    out = _emit(tape, p, "masked_softmax", backward)
    out_holder.append(out)
    return out


def log_pick(tape: Tape | None, p: Tensor, row: int) -> Tensor:
    if p.shape[1] != 1 or not (0 <= row < p.shape[0]):
        raise InvalidArgument("log_pick expects a column vector and a valid row")
    val = p.value[row, 0]
    if val <= 0.0:
        raise InvalidState("log_pick of a zero-probability entry")
    out_holder = []

    def backward():
        g = np.zeros_like(p.value)
        g[row, 0] = out_holder[0].grad[0, 0] / val
        p.accumulate(g)

    out = _emit(tape, np.array([[np.log(val)]]), "log_pick", backward)
    out_holder.append(out)
    return out


def add(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise InvalidArgument(f"add shape mismatch {a.shape} vs {b.shape}")
    out_holder = []

    def backward():
        g = out_holder[0].grad
        a.accumulate(g)
        b.accumulate(g)

    out = _emit(tape, a.value + b.value, "add", backward)
    out_holder.append(out)
    return out


def mul_const(tape: Tape | None, a: Tensor, c: float) -> Tensor:
    out_holder = []

    def backward():
        a.accumulate(c * out_holder[0].grad)

    out = _emit(tape, c * a.value, "mul_const", backward)
    out_holder.append(out)
    return out


def sum_all(tape: Tape | None, a: Tensor) -> Tensor:
    out_holder = []

    def backward():
        a.accumulate(np.full_like(a.value, out_holder[0].grad[0, 0]))

    out = _emit(tape, np.array([[a.value.sum()]]), "sum_all", backward)
    out_holder.append(out)
    return out


def backward(tape: Tape, loss: Tensor, seed: float = 1.0) -> None:
    """Reverse-mode accumulation from a scalar loss on this tape.

    Repeated calls without zeroing gradients accumulate additively.
    """
    if loss.shape != (1, 1):
        raise InvalidArgument("loss must be a 1x1 tensor")
    if not tape.produced(loss):
        raise InvalidState("loss is not an output of this tape")
    loss.accumulate(np.array([[float(seed)]]))
    for node in reversed(tape.nodes):
        if node.out.grad is not None:
            node.backward()
    # Intermediate grads belong to one backward pass only; clear them so a
    # second backward on the same tape starts from the fresh seed.
    for node in reversed(tape.nodes):
        node.out.grad = None
