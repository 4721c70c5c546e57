"""Reverse-mode automatic differentiation over dense float64 arrays.

A ``Tensor`` wraps a numpy array plus an optional gradient. Operations
executed while a ``Tape`` is active are recorded in execution order;
``backward`` on a scalar loss walks the tape in reverse, which is a valid
topological order because every op runs after its inputs exist. Tensors
created outside a tape are plain values and carry no graph, so evaluation
code pays no tracking cost.

All values are float64. Broadcasting is limited to row/column expansion
(a bias row, a per-row scalar column); anything fancier is out of scope.
"""

from __future__ import annotations

import numpy as np

from .exceptions import (
    DegenerateRowError,
    DetachedGraphError,
    ReproducibilityError,
    ShapeError,
    TapeConsumedError,
)

_TAPES: list["Tape"] = []


class Tape:
    """Ordered record of executed ops for one forward/backward pass.

    Single writer: one pass owns the tape exclusively. The node list is
    dropped after backward; calling backward twice raises.
    """

    def __init__(self):
        self._nodes = []
        self.consumed = False

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPES.pop()
        return False


class Tensor:
    """Dense float64 array with optional gradient-tape linkage."""

    __slots__ = ("values", "requires_grad", "grad", "name", "_tape")

    def __init__(self, values, requires_grad=False, name=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._tape = None

    @property
    def shape(self):
        return self.values.shape

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad}{tag})"

    def item(self):
        return float(self.values)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    # arithmetic sugar; scalars become constants
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out, parents, pullback):
    """Attach ``out`` to the active tape when gradients are wanted."""
    if _TAPES and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape = _TAPES[-1]
        tape._nodes.append((out, parents, pullback))
        out._tape = tape
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after row/column expansion."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(loss):
    """Accumulate gradients of ``loss`` into every reachable tensor.

    ``loss`` must be a scalar recorded on a live tape. The tape is
    consumed: a second backward without a fresh forward pass is an error.
    """
    if loss.values.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.values.shape}")
    tape = loss._tape
    if tape is None:
        raise DetachedGraphError("loss is not attached to any tape")
    if tape.consumed:
        raise TapeConsumedError("backward() already ran on this tape")
    tape.consumed = True

    loss.grad = np.ones_like(loss.values)
    for out, parents, pullback in reversed(tape._nodes):
        if out.grad is None:
            continue
        grads = pullback(out.grad)
        for parent, g in zip(parents, grads):
            if g is None or not parent.requires_grad:
                continue
            # accumulation is functional (never in-place), so views are safe
            parent.grad = g if parent.grad is None else parent.grad + g
    tape._nodes = []


# ---------------------------------------------------------------------------
# primitive ops


def add(a, b):
    out = Tensor(a.values + b.values)

    def pullback(g):
        return _unbroadcast(g, a.values.shape), _unbroadcast(g, b.values.shape)

    return _record(out, (a, b), pullback)


def sub(a, b):
    out = Tensor(a.values - b.values)

    def pullback(g):
        return _unbroadcast(g, a.values.shape), -_unbroadcast(g, b.values.shape)

    return _record(out, (a, b), pullback)


def mul(a, b):
    out = Tensor(a.values * b.values)

    def pullback(g):
        return (
            _unbroadcast(g * b.values, a.values.shape),
            _unbroadcast(g * a.values, b.values.shape),
        )

    return _record(out, (a, b), pullback)


def div(a, b):
    out = Tensor(a.values / b.values)

    def pullback(g):
        return (
            _unbroadcast(g / b.values, a.values.shape),
            _unbroadcast(-g * a.values / (b.values * b.values), b.values.shape),
        )

    return _record(out, (a, b), pullback)


def scale(x, c):
    c = float(c)
    out = Tensor(x.values * c)

    def pullback(g):
        return (g * c,)

    return _record(out, (x,), pullback)


def add_const(x, c):
    """Add a constant array (no gradient flows to the constant)."""
    out = Tensor(x.values + c)

    def pullback(g):
        return (_unbroadcast(g, x.values.shape),)

    return _record(out, (x,), pullback)


def mul_const(x, c):
    out = Tensor(x.values * c)

    def pullback(g):
        return (_unbroadcast(g * c, x.values.shape),)

    return _record(out, (x,), pullback)


def matmul(a, b):
    if a.values.ndim != 2 or b.values.ndim != 2 or a.values.shape[1] != b.values.shape[0]:
        raise ShapeError(
            f"matmul: incompatible shapes {a.values.shape} x {b.values.shape}"
        )
    out = Tensor(a.values @ b.values)

    def pullback(g):
        return g @ b.values.T, a.values.T @ g

    return _record(out, (a, b), pullback)


def transpose(x):
    out = Tensor(x.values.T)

    def pullback(g):
        return (g.T,)

    return _record(out, (x,), pullback)


def exp(x):
    out = Tensor(np.exp(x.values))

    def pullback(g):
        return (g * out.values,)

    return _record(out, (x,), pullback)


def log(x):
    out = Tensor(np.log(x.values))

    def pullback(g):
        return (g / x.values,)

    return _record(out, (x,), pullback)


def sqrt(x):
    out = Tensor(np.sqrt(x.values))

    def pullback(g):
        return (g * 0.5 / out.values,)

    return _record(out, (x,), pullback)


def tanh(x):
    out = Tensor(np.tanh(x.values))

    def pullback(g):
        return (g * (1.0 - out.values * out.values),)

    return _record(out, (x,), pullback)


def sigmoid(x):
    out = Tensor(1.0 / (1.0 + np.exp(-x.values)))

    def pullback(g):
        return (g * out.values * (1.0 - out.values),)

    return _record(out, (x,), pullback)


def relu(x):
    out = Tensor(np.maximum(x.values, 0.0))

    def pullback(g):
        return (g * (x.values > 0.0),)

    return _record(out, (x,), pullback)


def clip_min(x, lo):
    """Elementwise max(x, lo); gradient is zero where the floor binds."""
    out = Tensor(np.maximum(x.values, lo))

    def pullback(g):
        return (g * (x.values > lo),)

    return _record(out, (x,), pullback)


def masked_fill(x, fill_mask, value):
    """Replace entries where ``fill_mask`` is True by ``value`` (constant)."""
    out = Tensor(np.where(fill_mask, value, x.values))

    def pullback(g):
        return (g * ~fill_mask,)

    return _record(out, (x,), pullback)


def softmax_rows(x, mask=None):
    """Row-wise softmax, numerically stabilized by per-row max subtraction.

    ``mask`` (True = valid candidate) restricts each row's support; excluded
    entries come out exactly 0. A fully-masked row is an error.
    """
    xv = x.values
    if xv.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got shape {xv.shape}")
    if mask is None:
        keep = np.ones(xv.shape, dtype=bool)
    else:
        keep = np.asarray(mask, dtype=bool)
        if keep.shape != xv.shape:
            raise ShapeError(f"mask shape {keep.shape} != input shape {xv.shape}")
        dead = ~keep.any(axis=1)
        if dead.any():
            raise DegenerateRowError(
                f"softmax_rows: fully masked row(s) {np.nonzero(dead)[0].tolist()}"
            )
    shifted = xv - np.max(np.where(keep, xv, -np.inf), axis=1, keepdims=True)
    e = np.where(keep, np.exp(np.where(keep, shifted, 0.0)), 0.0)
    s = e / e.sum(axis=1, keepdims=True)
    out = Tensor(s)

    def pullback(g):
        inner = (g * s).sum(axis=1, keepdims=True)
        return (s * (g - inner),)

    return _record(out, (x,), pullback)


def concat_cols(tensors):
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat_cols: empty tensor list")
    rows = tensors[0].values.shape[0]
    for t in tensors:
        if t.values.ndim != 2 or t.values.shape[0] != rows:
            raise ShapeError(
                f"concat_cols: row mismatch {[t.values.shape for t in tensors]}"
            )
    widths = [t.values.shape[1] for t in tensors]
    out = Tensor(np.concatenate([t.values for t in tensors], axis=1))
    bounds = np.cumsum([0] + widths)

    def pullback(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(widths)))

    return _record(out, tuple(tensors), pullback)


def slice_cols(x, start, stop):
    out = Tensor(x.values[:, start:stop])

    def pullback(g):
        full = np.zeros_like(x.values)
        full[:, start:stop] = g
        return (full,)

    return _record(out, (x,), pullback)


def sum_all(x):
    out = Tensor(x.values.sum())

    def pullback(g):
        return (np.broadcast_to(g, x.values.shape),)

    return _record(out, (x,), pullback)


def mean_all(x):
    n = x.values.size
    out = Tensor(x.values.sum() / n)

    def pullback(g):
        return (np.broadcast_to(g / n, x.values.shape),)

    return _record(out, (x,), pullback)


def row_sums(x):
    """Sum each row into a column vector (m, 1)."""
    out = Tensor(x.values.sum(axis=1, keepdims=True))

    def pullback(g):
        return (np.broadcast_to(g, x.values.shape),)

    return _record(out, (x,), pullback)


def tile_rows(x, reps):
    """Stack ``reps`` vertical copies of ``x``."""
    out = Tensor(np.tile(x.values, (reps, 1)))
    rows = x.values.shape[0]

    def pullback(g):
        return (g.reshape(reps, rows, -1).sum(axis=0),)

    return _record(out, (x,), pullback)


def block_matmul(adj, x, n_blocks):
    """Apply one (N, N) matrix to each of ``n_blocks`` stacked row blocks.

    ``x`` has shape (n_blocks * N, d); block b holds rows [b*N, (b+1)*N).
    Equivalent to multiplying by block-diag(adj) and is the batched form of
    neighbor aggregation with a shared adjacency.
    """
    n = adj.values.shape[0]
    if adj.values.shape != (n, n):
        raise ShapeError(f"block_matmul: adjacency must be square, got {adj.values.shape}")
    if x.values.shape[0] != n_blocks * n:
        raise ShapeError(
            f"block_matmul: {x.values.shape[0]} rows != {n_blocks} blocks x {n}"
        )
    d = x.values.shape[1]
    x3 = x.values.reshape(n_blocks, n, d)
    out = Tensor(np.matmul(adj.values, x3).reshape(n_blocks * n, d))

    def pullback(g):
        g3 = g.reshape(n_blocks, n, d)
        dx = np.matmul(adj.values.T, g3).reshape(n_blocks * n, d)
        dadj = np.tensordot(g3, x3, axes=([0, 2], [0, 2]))
        return dadj, dx

    return _record(out, (adj, x), pullback)


def dropout(x, rate, rng, training=True):
    """Inverted dropout with a per-call mask drawn from ``rng``.

    Identity when not training or rate is 0: evaluation and gradient-check
    runs go through this path.
    """
    if not training or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    mask = (rng.random(x.values.shape) >= rate) / (1.0 - rate)
    out = Tensor(x.values * mask)

    def pullback(g):
        return (g * mask,)

    return _record(out, (x,), pullback)


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(f, x, h=1e-6):
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps a Tensor to a scalar Tensor and must be deterministic under
    whatever RNG state it captures. Error is measured per component as
    |analytic - numeric| / max(1, |numeric|).
    """
    if not 1e-8 <= h <= 1e-4:
        raise ValueError(f"step h must lie in [1e-8, 1e-4], got {h}")

    base = x.values.copy()
    probe1 = float(f(Tensor(base.copy())).values)
    probe2 = float(f(Tensor(base.copy())).values)
    if probe1 != probe2:
        raise ReproducibilityError(
            f"f is not deterministic: {probe1!r} != {probe2!r}"
        )

    param = Tensor(base.copy(), requires_grad=True)
    with Tape():
        out = f(param)
        backward(out)
    analytic = param.grad
    if analytic is None:
        analytic = np.zeros_like(base)

    numeric = np.zeros_like(base)
    flat = base.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(Tensor(base.copy())).values)
        flat[i] = orig - h
        fm = float(f(Tensor(base.copy())).values)
        flat[i] = orig
        num_flat[i] = (fp - fm) / (2.0 * h)

    denom = np.maximum(1.0, np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))
