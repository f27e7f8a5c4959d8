"""Dense tensors with tape-based reverse-mode differentiation.

Arrays live in numpy; every differentiable op appends a record
``(output, parents, backward_fn)`` to the active :class:`Tape`.  Outside a
tape context ops still compute values but nothing is recorded, which is how
evaluation runs.
"""
from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import BackwardError, ContractError, DimensionError, NumericError

_local = threading.local()

DTYPES = {"float64": np.float64, "float32": np.float32}


def get_dtype():
    return getattr(_local, "dtype", np.float64)


def set_dtype(name) -> None:
    """Set the working precision of the current thread ("float64" or "float32")."""
    _local.dtype = DTYPES[name] if isinstance(name, str) else np.dtype(name).type


@contextlib.contextmanager
def precision(name):
    previous = get_dtype()
    set_dtype(name)
    try:
        yield
    finally:
        _local.dtype = previous


def _tape_stack() -> list:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def current_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


@dataclass
class _Record:
    out: "Tensor"
    parents: tuple
    backward: Callable
    op: str


class Tape:
    """Ordered record of the differentiable ops executed inside ``with tape:``.

    A tape may be differentiated once; :meth:`reset` clears it for reuse.
    """

    def __init__(self):
        self.records: list[_Record] = []
        self.consumed = False
        self.visits = 0

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().remove(self)
        return False

    def __len__(self):
        return len(self.records)

    def record(self, out, parents, backward, op):
        self.records.append(_Record(out, tuple(parents), backward, op))

    def reset(self) -> None:
        self.records = []
        self.consumed = False
        self.visits = 0

    def backward(self, loss: "Tensor") -> None:
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if self.consumed:
            raise BackwardError("tape already differentiated; call reset() first")
        self.consumed = True
        if not loss.requires_grad:
            return
        grads = {id(loss): np.ones_like(loss.data)}
        self.visits = 0
        for rec in reversed(self.records):
            self.visits += 1
            g = grads.pop(id(rec.out), None)
            if g is None:
                continue
            for parent, pg in zip(rec.parents, rec.backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(pg, parent.data.shape)
                if parent._recorded:
                    key = id(parent)
                    grads[key] = grads[key] + pg if key in grads else pg
                else:
                    parent._grad = pg.copy() if parent._grad is None else parent._grad + pg


def backward(loss: "Tensor") -> None:
    """Populate ``.grad`` of every leaf that ``loss`` depends on.

    A loss built without any recorded op (a constant) leaves all grads at zero.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._tape is None:
        return
    loss._tape.backward(loss)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Tensor:
    """A dense real array, optionally tracked for gradients."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.array(data, dtype=dtype or get_dtype())
        self.requires_grad = bool(requires_grad)
        self._grad = None
        self._tape = None
        self._recorded = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            return np.zeros_like(self.data)
        return self._grad

    def zero_grad(self) -> None:
        self._grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return self.shape[0]

    # operators
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

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    # method forms of common ops
    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    @property
    def T(self):
        return swapaxes(self, -1, -2)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out._grad = None
    out._tape = None
    out._recorded = False
    tape = current_tape()
    out.requires_grad = tape is not None and any(p.requires_grad for p in parents)
    if out.requires_grad:
        tape.record(out, parents, backward, op)
        out._tape = tape
        out._recorded = True
    return out


def _pair(a, b):
    a = as_tensor(a)
    b = as_tensor(b)
    return a, b


# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _result(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _result(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data
    return _result(out, (a, b), lambda g: (g / b.data, -g * out / b.data), "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    p = float(exponent)
    return _result(a.data ** p, (a,), lambda g: (g * p * a.data ** (p - 1),), "pow")


def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    if b.ndim == 2 and a.ndim > 2:
        # fold the batch axes into rows: one large product instead of many small ones
        k = a.shape[-1]
        a2 = a.data.reshape(-1, k)
        out = (a2 @ b.data).reshape(a.shape[:-1] + (b.shape[1],))

        def backward(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ b.data.T).reshape(a.shape), a2.T @ g2

        return _result(out, (a, b), backward, "matmul")

    out = a.data @ b.data

    def backward(g):
        return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    return _result(out, (a, b), backward, "matmul")


# reductions and shape ops

def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _result(np.asarray(out), (a,), backward, "sum")


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def swapaxes(a, i: int, j: int) -> Tensor:
    a = as_tensor(a)
    return _result(np.swapaxes(a.data, i, j), (a,), lambda g: (np.swapaxes(g, i, j),), "swapaxes")


def getitem(a, index) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _result(a.data[index], (a,), backward, "getitem")


def take_rows(table, ids) -> Tensor:
    """Embedding lookup: ``table[ids]`` along axis 0 with scatter-add backward."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (full,)

    return _result(table.data[ids], (table,), backward, "take_rows")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _result(np.stack([t.data for t in tensors], axis=axis), tensors, backward, "stack")


# unary nonlinearities

def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _result(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # tanh form is overflow-free for any finite input
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a) -> Tensor:
    a = as_tensor(a)
    return _result(np.maximum(a.data, 0), (a,), lambda g: (g * (a.data > 0),), "relu")


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    """Leaky ReLU for 0 <= slope <= 1."""
    a = as_tensor(a)
    x = a.data

    def backward(g):
        scale = (x > 0).astype(x.dtype) * (1.0 - slope) + slope
        return (g * scale,)

    return _result(np.maximum(x, slope * x), (a,), backward, "leaky_relu")


def elu(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    neg_part = np.expm1(np.minimum(x, 0))
    out = np.maximum(x, 0) + neg_part
    # derivative: 1 for x > 0 (where neg_part == 0), exp(x) otherwise
    return _result(out, (a,), lambda g: (g * (neg_part + 1.0),), "elu")


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    mask = (a.data >= lo) & (a.data <= hi)
    return _result(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,), "clip")


def norm(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Euclidean norm along ``axis``; the gradient at a zero vector is taken as zero."""
    a = as_tensor(a)
    out = np.sqrt(np.sum(a.data * a.data, axis=axis, keepdims=True))

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        safe = np.where(out > 0, out, 1.0)
        return (g * np.where(out > 0, a.data / safe, 0.0),)

    value = out if keepdims else np.squeeze(out, axis=axis)
    return _result(value, (a,), backward, "norm")


# normalisations

def _check_finite(x: np.ndarray, op: str) -> None:
    if np.isnan(x).any():
        raise NumericError(f"{op}: NaN in input")


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    _check_finite(a.data, "softmax")
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return _result(out, (a,), backward, "softmax")


def softmax_rows(a) -> Tensor:
    """Row-wise softmax (last axis) with per-row max subtraction."""
    return softmax(a, axis=-1)


def weighted_softmax(scores, weights, eps: float = 1e-8) -> Tensor:
    """Row softmax of ``scores`` reweighted by nonnegative ``weights`` and renormalised.

    out = softmax(s) * w / (sum_j softmax(s) * w + eps), evaluated in one fused op.
    Gradients flow to both arguments (coarsened adjacencies depend on parameters).
    """
    scores = as_tensor(scores)
    weights = as_tensor(weights)
    _check_finite(scores.data, "weighted_softmax")
    e = np.exp(scores.data - np.max(scores.data, axis=-1, keepdims=True))
    z = np.sum(e, axis=-1, keepdims=True)
    w = e * weights.data
    den = np.sum(w, axis=-1, keepdims=True) + eps * z
    out = w / den

    def backward(g):
        c = np.sum(g * out, axis=-1, keepdims=True)
        return g * out - c * (w + eps * e) / den, e / den * (g - c)

    return _result(out, (scores, weights), backward, "weighted_softmax")


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    _check_finite(a.data, "logsumexp")
    m = np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = np.sum(e, axis=axis, keepdims=True)
    out = m + np.log(s)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * e / s,)

    value = out if keepdims else np.squeeze(out, axis=axis)
    return _result(value, (a,), backward, "logsumexp")


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    return a - logsumexp(a, axis=axis, keepdims=True)


# similarity

COSINE_EPS = 1e-8


def cosine(u, v, eps: float = COSINE_EPS) -> Tensor:
    """Cosine similarity along the last axis: u.v / (|u||v| + eps)."""
    u, v = _pair(u, v)
    if u.shape[-1:] != v.shape[-1:]:
        raise DimensionError(f"cosine needs equal lengths, got {u.shape} and {v.shape}")
    dot = tsum(u * v, axis=-1)
    return dot / (norm(u) * norm(v) + eps)


def cosine_matrix(x, y, eps: float = COSINE_EPS) -> Tensor:
    """All-pairs cosine similarity between the rows of ``x`` and ``y``."""
    x, y = _pair(x, y)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionError(f"cosine_matrix needs equal widths, got {x.shape} and {y.shape}")
    dots = x @ y.T
    nx = norm(x, keepdims=True)
    ny = norm(y, keepdims=True)
    return dots / (nx @ ny.T + eps)


def cosine_np(u: np.ndarray, v: np.ndarray, eps: float = COSINE_EPS) -> np.ndarray:
    """Non-differentiable cosine along the last axis, accumulated feature by feature.

    Accumulating in a fixed feature order makes the result bit-identical whether
    it is evaluated for a single pair or broadcast over a whole matrix.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape[-1] != v.shape[-1]:
        raise DimensionError(f"cosine needs equal lengths, got {u.shape} and {v.shape}")
    dot = uu = vv = 0.0
    for k in range(u.shape[-1]):
        a = u[..., k]
        b = v[..., k]
        dot = dot + a * b
        uu = uu + a * a
        vv = vv + b * b
    return dot / (np.sqrt(uu) * np.sqrt(vv) + eps)
