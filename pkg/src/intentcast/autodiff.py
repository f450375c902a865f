"""Reverse-mode automatic differentiation over float64 numpy arrays.

A Tensor wraps an ndarray and remembers how it was produced; calling
``backward()`` on a scalar walks the tape and accumulates ``.grad`` on every
tensor that contributed, leaves included.  The op set is deliberately small:
exactly what the forecasting model needs (affine maps, gate nonlinearities,
concatenation/slicing, row gather/scatter for graph message passing, and two
fused masked-softmax ops for numerically stable classification).  Broadcasting
is supported only through numpy semantics on the elementwise ops, with
gradients reduced back to the operand shapes.

Everything is float64.  There is no device abstraction and no lazy execution;
forward values are computed eagerly, so ``Tensor.values`` is always valid.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Iterator, Sequence

import numpy as np

from .errors import ShapeError

_grad_enabled = True


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording inside the context (forward values only)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """An ndarray plus the backward closure that produced it.

    Gradients only flow into tensors with ``requires_grad`` set (parameters
    and explicitly-marked inputs) and through ops touching them; everything
    else is treated as a constant and recorded nowhere, which keeps the tape
    small.
    """

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, values, _parents=(), _backward=None, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: np.ndarray | None = None
        if _grad_enabled and (requires_grad or any(p.requires_grad for p in _parents)):
            self.requires_grad = True
            self._parents = _parents
            self._backward = _backward
        else:
            self.requires_grad = False
            self._parents = ()
            self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    def item(self) -> float:
        return float(self.values)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every ancestor's ``.grad``."""
        if self.values.size != 1:
            raise ShapeError(f"backward() requires a scalar, got shape {self.shape}")
        order = _toposort(self)
        self.grad = np.ones_like(self.values)
        for node in order:
            if node._backward is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._backward(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                # Accumulation always allocates, so views of node.grad are safe.
                parent.grad = g if parent.grad is None else parent.grad + g

    # Operator sugar for the common arithmetic; everything else is a module fn.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _toposort(root: Tensor) -> list[Tensor]:
    # Iterative postorder; rollout tapes get deep enough to overflow recursion.
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    order.reverse()
    return order


def tensor(values, requires_grad: bool = False) -> Tensor:
    """Wrap values as a leaf tensor; pass requires_grad=True to collect its gradient."""
    return Tensor(values, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(
        a.values + b.values,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return Tensor(
        a.values - b.values,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return Tensor(
        a.values * b.values,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.values, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.values, b.shape) if b.requires_grad else None,
        ),
    )


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return Tensor(
        a.values / b.values,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.values, a.shape),
            _unbroadcast(-g * a.values / (b.values * b.values), b.shape),
        ),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return Tensor(
        a.values @ b.values,
        (a, b),
        lambda g: (
            g @ b.values.T if a.requires_grad else None,
            a.values.T @ g if b.requires_grad else None,
        ),
    )


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fused x @ w + b with the bias broadcast over rows."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"affine shape mismatch: {x.shape} @ {w.shape}")
    return Tensor(
        x.values @ w.values + b.values,
        (x, w, b),
        lambda g: (
            g @ w.values.T if x.requires_grad else None,
            x.values.T @ g if w.requires_grad else None,
            g.sum(axis=0) if b.requires_grad else None,
        ),
    )


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    keep = x.values > 0.0
    return Tensor(np.where(keep, x.values, 0.0), (x,), lambda g: (g * keep,))


def tanh(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    y = np.tanh(x.values)
    return Tensor(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    # Stable in both tails.
    v = x.values
    y = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    return Tensor(y, (x,), lambda g: (g * y * (1.0 - y),))


def exp(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    y = np.exp(x.values)
    return Tensor(y, (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    return Tensor(np.log(x.values), (x,), lambda g: (g / x.values,))


def sqrt(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    y = np.sqrt(x.values)
    return Tensor(y, (x,), lambda g: (g * (0.5 / y),))


def clamp_min(x: Tensor, floor: float) -> Tensor:
    """max(x, floor); gradient flows only where x >= floor."""
    x = _as_tensor(x)
    keep = x.values >= floor
    return Tensor(np.maximum(x.values, floor), (x,), lambda g: (g * keep,))


def sum_all(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    return Tensor(x.values.sum(), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean_all(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    n = x.values.size
    return Tensor(x.values.mean(), (x,), lambda g: (np.broadcast_to(g / n, x.shape).copy(),))


def sum_axis1(x: Tensor) -> Tensor:
    """Row sums of a 2-D tensor, kept as a column: (n, k) -> (n, 1)."""
    x = _as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"sum_axis1 expects 2-D, got {x.shape}")
    return Tensor(
        x.values.sum(axis=1, keepdims=True),
        (x,),
        lambda g: (np.broadcast_to(g, x.shape).copy(),),
    )


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    widths = [p.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def bwd(g):
        return tuple(g[:, offsets[i] : offsets[i + 1]] for i in range(len(parts)))

    return Tensor(np.concatenate([p.values for p in parts], axis=1), tuple(parts), bwd)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    heights = [p.shape[0] for p in parts]
    offsets = np.cumsum([0] + heights)

    def bwd(g):
        return tuple(g[offsets[i] : offsets[i + 1]] for i in range(len(parts)))

    return Tensor(np.concatenate([p.values for p in parts], axis=0), tuple(parts), bwd)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)

    def bwd(g):
        full = np.zeros(x.shape)
        full[:, start:stop] = g
        return (full,)

    return Tensor(x.values[:, start:stop].copy(), (x,), bwd)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)

    def bwd(g):
        full = np.zeros(x.shape)
        full[start:stop] = g
        return (full,)

    return Tensor(x.values[start:stop].copy(), (x,), bwd)


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows by index; duplicate indices accumulate in the backward pass."""
    x = _as_tensor(x)
    idx = np.asarray(idx, dtype=np.intp)

    def bwd(g):
        full = np.zeros(x.shape)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor(x.values[idx], (x,), bwd)


def segment_sum(x: Tensor, idx: np.ndarray, n_rows: int) -> Tensor:
    """Scatter-add rows of x into an (n_rows, k) result at positions idx."""
    x = _as_tensor(x)
    idx = np.asarray(idx, dtype=np.intp)
    out = np.zeros((n_rows, x.shape[1]))
    np.add.at(out, idx, x.values)
    return Tensor(out, (x,), lambda g: (g[idx],))


def take_per_row(x: Tensor, cols: np.ndarray) -> Tensor:
    """Pick one entry per row: (n, k) with cols (n,) -> (n, 1)."""
    x = _as_tensor(x)
    cols = np.asarray(cols, dtype=np.intp)
    rows = np.arange(x.shape[0])

    def bwd(g):
        full = np.zeros(x.shape)
        full[rows, cols] = g[:, 0]
        return (full,)

    return Tensor(x.values[rows, cols][:, None], (x,), bwd)


def masked_softmax(logits: Tensor, active: np.ndarray) -> Tensor:
    """Softmax over the active columns only; inactive columns get probability 0.

    Stable via per-row max subtraction over the active set.
    """
    logits = _as_tensor(logits)
    active = np.asarray(active, dtype=bool)
    if active.shape != (logits.shape[1],):
        raise ShapeError(f"mask width {active.shape} != logits width {logits.shape[1]}")
    if not active.any():
        raise ShapeError("masked_softmax needs at least one active class")
    z = logits.values[:, active]
    if z.shape[0]:
        m = z.max(axis=1, keepdims=True)
        e = np.exp(z - m)
        p_act = e / e.sum(axis=1, keepdims=True)
    else:
        p_act = z
    p = np.zeros_like(logits.values)
    p[:, active] = p_act

    def bwd(g):
        g_act = g[:, active]
        inner = (p_act * g_act).sum(axis=1, keepdims=True)
        dx = np.zeros_like(logits.values)
        dx[:, active] = p_act * (g_act - inner)
        return (dx,)

    return Tensor(p, (logits,), bwd)


def rowdot(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise dot product of two (n, k) tensors -> (n, 1)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError(f"rowdot needs matching 2-D shapes, got {a.shape} and {b.shape}")
    out = (a.values * b.values).sum(axis=1, keepdims=True)
    return Tensor(
        out,
        (a, b),
        lambda g: (
            g * b.values if a.requires_grad else None,
            g * a.values if b.requires_grad else None,
        ),
    )


def gru_gates(gx: Tensor, gh: Tensor, h: Tensor) -> Tensor:
    """Fused GRU gate math given the two affine projections (n, 3H) and h (n, H).

    Gate order along the packed axis is reset, update, candidate:
        r = sigmoid(gx_r + gh_r); z = sigmoid(gx_z + gh_z)
        c = tanh(gx_c + r * gh_c); h' = (1 - z) * c + z * h
    """
    gx, gh, h = _as_tensor(gx), _as_tensor(gh), _as_tensor(h)
    n_h = h.shape[1]
    if gx.shape != (h.shape[0], 3 * n_h) or gh.shape != gx.shape:
        raise ShapeError(f"gru_gates shapes {gx.shape}/{gh.shape} do not match hidden {h.shape}")
    xr, xz, xc = gx.values[:, :n_h], gx.values[:, n_h : 2 * n_h], gx.values[:, 2 * n_h :]
    hr, hz, hc = gh.values[:, :n_h], gh.values[:, n_h : 2 * n_h], gh.values[:, 2 * n_h :]
    r = _sigmoid_np(xr + hr)
    z = _sigmoid_np(xz + hz)
    c = np.tanh(xc + r * hc)
    out = (1.0 - z) * c + z * h.values

    def bwd(g):
        dz = g * (h.values - c) * z * (1.0 - z)
        dpre_c = g * (1.0 - z) * (1.0 - c * c)
        dr = dpre_c * hc * r * (1.0 - r)
        dgx = np.concatenate([dr, dz, dpre_c], axis=1)
        dgh = np.concatenate([dr, dz, dpre_c * r], axis=1)
        return (
            dgx if gx.requires_grad else None,
            dgh if gh.requires_grad else None,
            g * z if h.requires_grad else None,
        )

    return Tensor(out, (gx, gh, h), bwd)


def _sigmoid_np(v: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def segment_softmax(scores: Tensor, idx: np.ndarray, n_segments: int) -> Tensor:
    """Softmax of (E, 1) scores within groups given by idx; stable per group."""
    scores = _as_tensor(scores)
    idx = np.asarray(idx, dtype=np.intp)
    s = scores.values[:, 0]
    shift = np.full(n_segments, -np.inf)
    if s.size:
        np.maximum.at(shift, idx, s)
    e = np.exp(s - shift[idx])
    denom = np.zeros(n_segments)
    np.add.at(denom, idx, e)
    alpha = (e / denom[idx])[:, None]

    def bwd(g):
        inner = np.zeros(n_segments)
        np.add.at(inner, idx, alpha[:, 0] * g[:, 0])
        return ((alpha * (g - inner[idx][:, None])),)

    return Tensor(alpha, (scores,), bwd)


def masked_nll(logits: Tensor, active: np.ndarray, targets: np.ndarray) -> Tensor:
    """Per-row negative log-likelihood of ``targets`` under the masked softmax.

    Returns (n, 1).  Targets must index active columns.  Computed as
    logsumexp(active) - logit[target] so no probability is ever materialized.
    """
    logits = _as_tensor(logits)
    active = np.asarray(active, dtype=bool)
    targets = np.asarray(targets, dtype=np.intp)
    if not np.all(active[targets]):
        bad = targets[~active[targets]]
        raise ValueError(f"target class {int(bad[0])} is outside the active mask")
    z = logits.values[:, active]
    rows = np.arange(logits.shape[0])
    if z.shape[0]:
        m = z.max(axis=1, keepdims=True)
        e = np.exp(z - m)
        lse = m + np.log(e.sum(axis=1, keepdims=True))
        p_act = e / e.sum(axis=1, keepdims=True)
    else:
        lse = z[:, :1]
        p_act = z
    nll = lse - logits.values[rows, targets][:, None]

    def bwd(g):
        dx = np.zeros_like(logits.values)
        dx[:, active] = g * p_act
        dx[rows, targets] -= g[:, 0]
        return (dx,)

    return Tensor(nll, (logits,), bwd)
