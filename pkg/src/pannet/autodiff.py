"""A small reverse-mode gradient tape over numpy float64 arrays.

Operations record themselves on the innermost active :class:`Tape` of the
current thread whenever one of their inputs requires a gradient::

    with Tape() as tape:
        y = relu(matmul(x, w))
        loss = mean(y)
    grads = tape.backward(loss, wrt=[w])

A tape is immutable once its ``with`` block exits; calling ``backward``
repeatedly yields identical gradients in fresh buffers.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import NonFiniteValue, NotScalarLoss, ShapeMismatch

_state = threading.local()


def _tape_stack() -> list:
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


class Tensor:
    """Dense float64 array that may take part in gradient recording."""

    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return scale(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class _Record:
    op: str
    out: Tensor
    inputs: tuple
    vjp: Callable[[np.ndarray], tuple]


@dataclass
class Tape:
    records: list = field(default_factory=list)
    _closed: bool = False

    def __enter__(self) -> "Tape":
        if self._closed:
            raise RuntimeError("a tape records once; create a new Tape")
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise RuntimeError("tape stack corrupted; tapes must nest")
        stack.pop()
        self._closed = True

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, loss: Tensor, wrt: Iterable[Tensor] | None = None) -> dict:
        """Gradient of scalar ``loss`` with respect to tensors on this tape.

        With ``wrt`` the result holds exactly those tensors, in order, with
        zero arrays for any that do not influence ``loss``. Without it, every
        gradient-requiring input seen by the tape is returned.
        """
        if loss.data.size != 1:
            raise NotScalarLoss(f"loss must be scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        produced = {id(r.out) for r in self.records}
        for rec in reversed(self.records):
            g_out = grads.get(id(rec.out))
            if g_out is None:
                continue
            for t, g in zip(rec.inputs, rec.vjp(g_out)):
                if g is None or not isinstance(t, Tensor) or not t.requires_grad:
                    continue
                key = id(t)
                if key not in produced:
                    leaves[key] = t
                prev = grads.get(key)
                grads[key] = g.copy() if prev is None else prev + g
        if wrt is None:
            return {t: grads[k] for k, t in leaves.items()}
        out = {}
        for t in wrt:
            g = grads.get(id(t))
            out[t] = np.zeros_like(t.data) if g is None else g
        return out


def _record(op: str, out_data: np.ndarray, inputs: Sequence, vjp) -> Tensor:
    if not np.all(np.isfinite(out_data)):
        raise NonFiniteValue(op)
    requires = any(isinstance(t, Tensor) and t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.requires_grad = requires
    out.name = None
    stack = _tape_stack()
    if requires and stack:
        stack[-1].records.append(_Record(op, out, tuple(inputs), vjp))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- primitives


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    A, B = a.data, b.data
    if A.ndim not in (1, 2) or B.ndim not in (1, 2) or A.shape[-1] != B.shape[0]:
        raise ShapeMismatch(f"matmul: cannot multiply {A.shape} by {B.shape}")

    def vjp(g):
        if A.ndim == 1 and B.ndim == 1:
            return g * B, g * A
        if A.ndim == 1:
            return B @ g, np.outer(A, g)
        if B.ndim == 1:
            return np.outer(g, B), A.T @ g
        return g @ B.T, A.T @ g

    return _record("matmul", A @ B, (a, b), vjp)


def add(a, b) -> Tensor:
    """Elementwise sum with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeMismatch(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None
    sa, sb = a.shape, b.shape
    return _record("add", out, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def scale(x, s) -> Tensor:
    """``x * s`` where ``s`` is a constant (scalar or broadcastable array)
    or a scalar Tensor."""
    x = as_tensor(x)
    if isinstance(s, Tensor):
        if s.size != 1:
            raise ShapeMismatch(f"scale: tensor factor must be scalar, got {s.shape}")
        sv = s.data.reshape(())
        X = x.data
        sshape = s.shape
        return _record("scale", X * sv, (x, s),
                       lambda g: (g * sv, np.reshape(np.sum(g * X), sshape)))
    c = np.asarray(s, dtype=np.float64)
    try:
        out = x.data * c
    except ValueError:
        raise ShapeMismatch(f"scale: factor {c.shape} does not broadcast to {x.shape}") from None
    if out.shape != x.shape:
        raise ShapeMismatch(f"scale: factor {c.shape} would change shape {x.shape}")
    return _record("scale", out, (x,), lambda g: (g * c,))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _record("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return _record("sigmoid", s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)
    return _record("tanh", t, (x,), lambda g: (g * (1.0 - t * t),))


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        e = np.exp(x.data)
    return _record("exp", e, (x,), lambda g: (g * e,))


def softplus(x) -> Tensor:
    """``log(1 + exp(x))`` evaluated without overflow."""
    x = as_tensor(x)
    v = x.data
    out = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))
    s = _sigmoid(v)
    return _record("softplus", out, (x,), lambda g: (g * s,))


def row_gather(x, index) -> Tensor:
    """Rows ``x[index]``; the gradient scatters back to the gathered rows."""
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeMismatch(f"row_gather: index out of range for {x.shape[0]} rows")
    shape = x.shape

    def vjp(g):
        dx = np.zeros(shape)
        np.add.at(dx, idx, g)
        return (dx,)

    return _record("row_gather", x.data[idx], (x,), vjp)


def row_scale(x, s) -> Tensor:
    """Multiply row ``i`` of matrix ``x`` by ``s[i]``."""
    x, s = as_tensor(x), as_tensor(s)
    if x.data.ndim != 2 or s.data.shape != (x.shape[0],):
        raise ShapeMismatch(f"row_scale: rows {x.shape} vs factors {s.shape}")
    X, S = x.data, s.data
    return _record("row_scale", X * S[:, None], (x, s),
                   lambda g: (g * S[:, None], np.sum(g * X, axis=1)))


def embedding_lookup_sum(tables: Sequence[Tensor], codes: np.ndarray) -> Tensor:
    """Row ``i`` of the result is ``sum_f tables[f][codes[i, f]]``."""
    codes = np.asarray(codes, dtype=np.int64)
    if codes.ndim != 2 or codes.shape[1] != len(tables):
        raise ShapeMismatch(
            f"embedding_lookup_sum: codes {codes.shape} vs {len(tables)} tables")
    if not tables:
        raise ShapeMismatch("embedding_lookup_sum needs at least one table")
    width = tables[0].shape[1]
    out = np.zeros((codes.shape[0], width))
    for f, t in enumerate(tables):
        if t.shape[1] != width:
            raise ShapeMismatch("embedding tables disagree on width")
        out += t.data[codes[:, f]]
    shapes = [t.shape for t in tables]

    def vjp(g):
        grads = []
        for f, shape in enumerate(shapes):
            d = np.zeros(shape)
            np.add.at(d, codes[:, f], g)
            grads.append(d)
        return tuple(grads)

    return _record("embedding_lookup_sum", out, tuple(tables), vjp)


def column_mean(x) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim != 2 or x.shape[0] == 0:
        raise ShapeMismatch(f"column_mean needs a non-empty matrix, got {x.shape}")
    n = x.shape[0]
    return _record("column_mean", x.data.mean(axis=0), (x,),
                   lambda g: (np.broadcast_to(g / n, x.shape).copy(),))


def mean(x) -> Tensor:
    """Mean over every element, as a 0-d tensor."""
    x = as_tensor(x)
    n = x.size
    return _record("mean", np.asarray(x.data.mean()), (x,),
                   lambda g: (np.full(x.shape, float(g) / n),))


def total(x) -> Tensor:
    x = as_tensor(x)
    return _record("sum", np.asarray(x.data.sum()), (x,),
                   lambda g: (np.full(x.shape, float(g)),))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return _record("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    bounds = np.cumsum(sizes)[:-1]
    return _record("concat", np.concatenate([x.data for x in xs], axis=axis), tuple(xs),
                   lambda g: tuple(np.split(g, bounds, axis=axis)))


@dataclass
class BatchNormState:
    """Running statistics for :func:`batch_norm` (updated in training mode)."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def fresh(cls, width: int, momentum: float = 0.1, eps: float = 1e-5):
        return cls(np.zeros(width), np.ones(width), momentum, eps)


def batch_norm(x, gamma, beta, state: BatchNormState, training: bool) -> Tensor:
    """Per-column normalisation of a ``[rows, width]`` matrix.

    Training mode normalises with the batch statistics (biased variance) and
    moves the running estimates toward them (unbiased variance), unless the
    batch has a single row. Evaluation mode uses the running estimates and
    is affine in ``x``.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    X = x.data
    if X.ndim != 2 or gamma.shape != (X.shape[1],) or beta.shape != (X.shape[1],):
        raise ShapeMismatch(f"batch_norm: x {X.shape}, gamma {gamma.shape}, beta {beta.shape}")
    G = gamma.data
    n = X.shape[0]
    if training:
        mu = X.mean(axis=0)
        var = X.var(axis=0)
        if n > 1:
            m = state.momentum
            state.running_mean = (1 - m) * state.running_mean + m * mu
            state.running_var = (1 - m) * state.running_var + m * var * n / (n - 1)
    else:
        mu, var = state.running_mean, state.running_var
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (X - mu) * inv
    out = xhat * G + beta.data

    def vjp(g):
        dgamma = np.sum(g * xhat, axis=0)
        dbeta = np.sum(g, axis=0)
        dxhat = g * G
        if training:
            dx = inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0))
        else:
            dx = dxhat * inv
        return dx, dgamma, dbeta

    return _record("batch_norm", out, (x, gamma, beta), vjp)


# ----------------------------------------------------------- gradient check


@dataclass
class GradCheckReport:
    """Worst relative error per parameter group and the overall verdict."""

    errors: dict
    tol: float
    h: float
    kink_warnings: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e <= self.tol for e in self.errors.values())

    @property
    def worst(self) -> float:
        return max(self.errors.values(), default=0.0)

    def lines(self) -> list[str]:
        out = []
        for name, err in self.errors.items():
            flag = "ok" if err <= self.tol else "FAIL"
            out.append(f"{name:<28s} max rel err {err:.3e}  {flag}")
        return out


def grad_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    atol: float = 1e-8,
    kink_threshold: float | None = None,
) -> GradCheckReport:
    """Compare tape gradients of ``f()`` with central differences.

    ``f`` must rebuild its computation from the current values of
    ``params`` on every call; parameters are perturbed in place and restored.
    An element's error is ``|g_tape - g_fd| / max(|g_tape|, |g_fd|, atol)``;
    ``atol`` keeps near-zero gradients from inflating the ratio.

    Relu inputs within ``kink_threshold`` (default ``10 * h``) of zero during
    the unperturbed pass are reported in ``kink_warnings``; callers should
    move inputs away from the kink rather than trust those entries.
    """
    kink_threshold = 10 * h if kink_threshold is None else kink_threshold
    names = list(params)
    tensors = [params[k] for k in names]
    with Tape() as tape:
        loss = f()
    tape_grads = tape.backward(loss, wrt=tensors)

    kinks = []
    for k, rec in enumerate(tape.records):
        if rec.op == "relu":
            close = int(np.sum(np.abs(rec.inputs[0].data) < kink_threshold))
            if close:
                kinks.append(f"op {k} (relu): {close} input(s) within {kink_threshold:g} of the kink")

    errors = {}
    for name, t in zip(names, tensors):
        g_tape = tape_grads[t]
        flat = t.data.reshape(-1)
        g_fd = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(f().data)
            flat[i] = orig - h
            down = float(f().data)
            flat[i] = orig
            g_fd[i] = (up - down) / (2 * h)
        gt = g_tape.reshape(-1)
        diff = np.abs(gt - g_fd)
        denom = np.maximum(np.maximum(np.abs(gt), np.abs(g_fd)), atol)
        rel = diff / denom
        errors[name] = float(rel.max()) if rel.size else 0.0
    return GradCheckReport(errors=errors, tol=tol, h=h, kink_warnings=kinks)
