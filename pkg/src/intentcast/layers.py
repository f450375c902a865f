"""Parameterized layers built on the autodiff tape.

Parameters live in a ParamStore (see optim.py) under dotted names; every
function here takes the store plus a name prefix, so layers are pure
functions of (params, inputs).  Affine weights initialize uniform in
+-1/sqrt(fan_in), biases to zero.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError

# (n_in, n_out, activation) with activation in {"relu", "none"}.
LayerSpec = Sequence[tuple[int, int, str]]


def init_linear(store, name: str, n_in: int, n_out: int, rng: np.random.Generator) -> None:
    bound = 1.0 / math.sqrt(n_in)
    store.add(f"{name}.w", rng.uniform(-bound, bound, size=(n_in, n_out)))
    store.add(f"{name}.b", np.zeros(n_out))


def linear(params, name: str, x: Tensor) -> Tensor:
    w = params[f"{name}.w"]
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"{name}: input width {x.shape[1]} != {w.shape[0]}")
    return ad.affine(x, w, params[f"{name}.b"])


def init_mlp(store, prefix: str, spec: LayerSpec, rng: np.random.Generator) -> None:
    for i, (n_in, n_out, _act) in enumerate(spec):
        init_linear(store, f"{prefix}.l{i}", n_in, n_out, rng)


def mlp_apply(params, prefix: str, spec: LayerSpec, x: Tensor) -> Tensor:
    """Affine stack with optional ReLU between layers, e.g. 93 -> 80 -> 40 -> 2."""
    for i, (n_in, n_out, act) in enumerate(spec):
        if x.shape[1] != n_in:
            raise ShapeError(f"{prefix}.l{i}: input width {x.shape[1]} != {n_in}")
        x = linear(params, f"{prefix}.l{i}", x)
        if act == "relu":
            x = ad.relu(x)
        elif act != "none":
            raise ValueError(f"unknown activation {act!r}")
    return x


def init_gru(store, prefix: str, n_in: int, n_hidden: int, rng: np.random.Generator) -> None:
    # Gate order along the packed axis: reset, update, candidate.
    store.add(f"{prefix}.w_x", rng.uniform(-1 / math.sqrt(n_in), 1 / math.sqrt(n_in), size=(n_in, 3 * n_hidden)))
    store.add(f"{prefix}.w_h", rng.uniform(-1 / math.sqrt(n_hidden), 1 / math.sqrt(n_hidden), size=(n_hidden, 3 * n_hidden)))
    store.add(f"{prefix}.b_x", np.zeros(3 * n_hidden))
    store.add(f"{prefix}.b_h", np.zeros(3 * n_hidden))


def gru_cell_step(params, prefix: str, x: Tensor, h: Tensor) -> Tensor:
    """One GRU step: update/reset gates plus tanh candidate.

        r = sigma(W_xr x + b_xr + W_hr h + b_hr)
        z = sigma(W_xz x + b_xz + W_hz h + b_hz)
        n = tanh(W_xn x + b_xn + r * (W_hn h + b_hn))
        h' = (1 - z) * n + z * h

    With all-zero parameters this reduces to h' = 0.5 * h.
    """
    w_x = params[f"{prefix}.w_x"]
    w_h = params[f"{prefix}.w_h"]
    n_h = w_h.shape[0]
    if x.shape[1] != w_x.shape[0]:
        raise ShapeError(f"{prefix}: input width {x.shape[1]} != {w_x.shape[0]}")
    if h.shape[1] != n_h:
        raise ShapeError(f"{prefix}: hidden width {h.shape[1]} != {n_h}")
    gx = ad.affine(x, w_x, params[f"{prefix}.b_x"])
    gh = ad.affine(h, w_h, params[f"{prefix}.b_h"])
    return ad.gru_gates(gx, gh, h)


def softmax_cross_entropy(
    logits: np.ndarray,
    target: int,
    weight: float = 1.0,
    active: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Weighted cross-entropy of one logit vector against ``target``.

    Masked classes are excluded before normalization and get probability 0.
    Returns (loss, probs) where probs has the full input width.  For the
    differentiable batched path see autodiff.masked_nll / masked_softmax.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ShapeError(f"expected a 1-D logit vector, got shape {logits.shape}")
    k = logits.shape[0]
    if active is None:
        active = np.ones(k, dtype=bool)
    else:
        active = np.asarray(active, dtype=bool)
    if not active[target]:
        raise ValueError(f"target class {target} is outside the active mask")
    if weight <= 0:
        raise ValueError("class weight must be positive")
    probs_t = ad.masked_softmax(ad.tensor(logits[None, :]), active)
    nll_t = ad.masked_nll(ad.tensor(logits[None, :]), active, np.array([target]))
    return weight * float(nll_t.values[0, 0]), probs_t.values[0]


def kl_diag_gaussian(mu: np.ndarray, sigma: np.ndarray) -> float:
    """KL(N(mu, diag sigma^2) || N(0, I)) in closed form; always >= 0."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if mu.shape != sigma.shape:
        raise ShapeError(f"mu/sigma shape mismatch: {mu.shape} vs {sigma.shape}")
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive elementwise")
    return float(0.5 * np.sum(mu * mu + sigma * sigma - 2.0 * np.log(sigma) - 1.0))


def kl_diag_gaussian_rows(mu: Tensor, log_sigma: Tensor) -> Tensor:
    """Differentiable per-row KL against the standard normal: (n, d) -> (n, 1)."""
    var = ad.exp(ad.mul(log_sigma, 2.0))
    inner = ad.sub(ad.add(ad.mul(mu, mu), var), ad.add(ad.mul(log_sigma, 2.0), 1.0))
    return ad.mul(ad.sum_axis1(inner), 0.5)
