"""Tape-based reverse-mode differentiation over float64 numpy arrays.

Every differentiable primitive computes its forward value eagerly and, when
gradient recording is on and an input requires a gradient, appends a node
``(output, parents, pullback)`` to the active tape.  :func:`backward` walks
the tape once in reverse and then discards it.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64


class DimensionError(ValueError):
    pass


class StaleTapeError(RuntimeError):
    pass


class _Tape:
    __slots__ = ("nodes", "serial")

    def __init__(self, serial: int):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self.serial = serial


class _State(threading.local):
    def __init__(self):
        self.grad_enabled = True
        self.serial = 0
        self.tape = _Tape(0)


_state = _State()


def _fresh_tape() -> None:
    _state.serial += 1
    _state.tape = _Tape(_state.serial)


def reset_tape() -> None:
    """Drop every recorded node without differentiating."""
    _fresh_tape()


@contextlib.contextmanager
def no_grad():
    prev = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


def is_grad_enabled() -> bool:
    return _state.grad_enabled


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_tape_serial", "_leaf", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._tape_serial = -1
        self._leaf = True
        self.name = name

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

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
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

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data, name: str | None = None):
        super().__init__(data, requires_grad=True, name=name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out: Tensor, parents: Sequence[Tensor], pullback: Callable) -> Tensor:
    if _state.grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._leaf = False
        out._tape_serial = _state.tape.serial
        _state.tape.nodes.append((out, tuple(parents), pullback))
    return out


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every leaf reachable from the scalar ``loss``."""
    if loss.data.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._leaf or loss._tape_serial != _state.tape.serial:
        raise StaleTapeError("loss is not on the active tape (already differentiated or reset)")
    tape = _state.tape
    _fresh_tape()
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for out, parents, pullback in reversed(tape.nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for p, gp in zip(parents, pullback(g)):
            if gp is None or not p.requires_grad:
                continue
            if p._leaf:
                p.grad += gp
            else:
                acc = grads.get(id(p))
                grads[id(p)] = gp if acc is None else acc + gp


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data)
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data / b.data)
    return _record(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _record(Tensor(y), (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    return _record(Tensor(np.log(x.data)), (x,), lambda g: (g / x.data,))


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)
    return _record(Tensor(y), (x,), lambda g: (g * 0.5 / y,))


def tabs(x: Tensor) -> Tensor:
    return _record(Tensor(np.abs(x.data)), (x,), lambda g: (g * np.sign(x.data),))


def sigmoid(x: Tensor) -> Tensor:
    # tanh form saturates to exact 0/1 instead of overflowing
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _record(Tensor(y), (x,), lambda g: (g * y * (1.0 - y),))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximated GELU; smooth everywhere."""
    u = x.data
    u2 = u * u
    inner = _GELU_C * u * (1.0 + 0.044715 * u2)
    th = np.tanh(inner)
    y = 0.5 * u * (1.0 + th)

    def pullback(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * u2)
        return (g * (0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * dinner),)

    return _record(Tensor(y), (x,), pullback)


# reductions and shape ops

def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    y = x.data.sum(axis=axis, keepdims=keepdims)

    def pullback(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _record(Tensor(y), (x,), pullback)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([x.shape[a] for a in axes]))
    return tsum(x, axis, keepdims) * (1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    return _record(Tensor(x.data.reshape(shape)), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return _record(Tensor(x.data.transpose(axes)), (x,), lambda g: (g.transpose(inv),))


def getitem(x: Tensor, idx) -> Tensor:
    def pullback(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return _record(Tensor(x.data[idx]), (x,), pullback)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    y = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _record(Tensor(y), tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def broadcast_to(x: Tensor, shape) -> Tensor:
    y = np.broadcast_to(x.data, shape).copy()
    return _record(Tensor(y), (x,), lambda g: (_unbroadcast(g, x.shape),))


# contractions

def linear(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ W.T (+ b)`` over the last axis of ``x``; ``W`` has shape (out, in)."""
    if W.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise DimensionError(f"linear: input shape {x.shape} incompatible with weight shape {W.shape}")
    if b is not None and b.shape != (W.shape[0],):
        raise DimensionError(f"linear: bias shape {b.shape} incompatible with weight shape {W.shape}")
    x2 = x.data.reshape(-1, W.shape[1])
    y2 = x2 @ W.data.T
    if b is not None:
        y2 = y2 + b.data
    y = y2.reshape(x.shape[:-1] + (W.shape[0],))

    def pullback(g):
        g2 = g.reshape(-1, W.shape[0])
        gx = (g2 @ W.data).reshape(x.shape)
        gW = g2.T @ x2
        if b is None:
            return gx, gW
        return gx, gW, g2.sum(axis=0)

    parents = (x, W) if b is None else (x, W, b)
    return _record(Tensor(y), parents, pullback)


def _parse_einsum(subscripts: str, n: int) -> tuple[list[str], str]:
    if "->" not in subscripts or "." in subscripts:
        raise ValueError("einsum needs explicit output subscripts and no ellipsis")
    lhs, out = subscripts.replace(" ", "").split("->")
    ins = lhs.split(",")
    if len(ins) != n:
        raise ValueError(f"einsum: {len(ins)} subscripts for {n} operands")
    for s in ins:
        if len(set(s)) != len(s):
            raise ValueError(f"einsum: repeated index in operand {s!r} unsupported")
    return ins, out


def _einsum2(spec: str, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Two-operand einsum lowered to one batched matmul."""
    lhs, out = spec.split("->")
    sa, sb = lhs.split(",")
    drop_a = [ax for ax, c in enumerate(sa) if c not in sb and c not in out]
    if drop_a:
        A = A.sum(axis=tuple(drop_a))
        sa = "".join(c for c in sa if c in sb or c in out)
    drop_b = [ax for ax, c in enumerate(sb) if c not in sa and c not in out]
    if drop_b:
        B = B.sum(axis=tuple(drop_b))
        sb = "".join(c for c in sb if c in sa or c in out)
    size = {c: A.shape[i] for i, c in enumerate(sa)}
    size.update({c: B.shape[i] for i, c in enumerate(sb)})
    batch = [c for c in out if c in sa and c in sb]
    left = [c for c in out if c in sa and c not in sb]
    right = [c for c in out if c in sb and c not in sa]
    contract = [c for c in sa if c in sb and c not in out]
    prod = lambda cs: int(np.prod([size[c] for c in cs], dtype=np.int64))
    A2 = A.transpose([sa.index(c) for c in batch + left + contract]).reshape(
        prod(batch), prod(left), prod(contract)
    )
    B2 = B.transpose([sb.index(c) for c in batch + contract + right]).reshape(
        prod(batch), prod(contract), prod(right)
    )
    C = np.matmul(A2, B2).reshape([size[c] for c in batch + left + right])
    order = batch + left + right
    return C.transpose([order.index(c) for c in out])


def _contract(spec: str, *arrays: np.ndarray) -> np.ndarray:
    if len(arrays) == 2:
        return _einsum2(spec, *arrays)
    return np.einsum(spec, *arrays, optimize=len(arrays) > 2)


def einsum(subscripts: str, *operands) -> Tensor:
    operands = [as_tensor(o) for o in operands]
    ins, out = _parse_einsum(subscripts, len(operands))
    arrays = [o.data for o in operands]
    y = _contract(subscripts.replace(" ", ""), *arrays)

    def pullback(g):
        grads = []
        for i, (sub_i, op) in enumerate(zip(ins, operands)):
            if not op.requires_grad:
                grads.append(None)
                continue
            others = [s for j, s in enumerate(ins) if j != i]
            avail = set(out).union(*others) if others else set(out)
            kept = "".join(c for c in sub_i if c in avail)
            spec = ",".join([out] + others) + "->" + kept
            gi = _contract(spec, g, *[a for j, a in enumerate(arrays) if j != i])
            if kept != sub_i:
                # index summed only inside this operand: gradient is constant along it
                for ax, c in enumerate(sub_i):
                    if c not in avail:
                        gi = np.expand_dims(gi, ax)
                gi = np.broadcast_to(gi, op.shape).copy()
            grads.append(gi)
        return grads

    return _record(Tensor(y), operands, pullback)


# normalizations and losses

def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Max-shifted softmax; ``mask`` (True = keep) broadcasts against ``x``.

    A slice with every entry masked comes out uniform, not NaN.
    """
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        z = np.where(mask, z, -np.inf)
    zmax = np.max(z, axis=axis, keepdims=True)
    dead = ~np.isfinite(zmax)
    zmax = np.where(dead, 0.0, zmax)
    with np.errstate(invalid="ignore"):
        ez = np.exp(z - zmax)
        tot = ez.sum(axis=axis, keepdims=True)
    y = np.where(dead, 1.0 / z.shape[axis], ez / np.where(dead, 1.0, tot))

    def pullback(g):
        gx = y * (g - (g * y).sum(axis=axis, keepdims=True))
        return (np.where(dead, 0.0, gx),)

    return _record(Tensor(y), (x,), pullback)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse
    p = np.exp(y)
    return _record(Tensor(y), (x,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def bce_with_logits(x: Tensor, target: np.ndarray) -> Tensor:
    """Elementwise binary cross-entropy of ``sigmoid(x)`` against ``target``."""
    t = np.asarray(target, dtype=DTYPE)
    u = x.data
    y = np.maximum(u, 0.0) - u * t + np.log1p(np.exp(-np.abs(u)))
    p = 0.5 * (1.0 + np.tanh(0.5 * u))
    return _record(Tensor(y), (x,), lambda g: (g * (p - t),))

