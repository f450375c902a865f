"""Parameter storage, Adam, gradient checking, and checkpoint IO."""

from __future__ import annotations

import io
import json
import math
import zipfile
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .autodiff import Tensor
from .errors import NumericError, SchemaError

CHECKPOINT_SCHEMA_VERSION = 1


class ParamStore:
    """Named parameter tensors with per-parameter Adam moments.

    Iteration order is insertion order and therefore identical across runs
    that build the model the same way, which the determinism contract relies
    on.
    """

    def __init__(self) -> None:
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, values: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(values, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        self._m[name] = np.zeros_like(t.values)
        self._v[name] = np.zeros_like(t.values)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterable[tuple[str, Tensor]]:
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def moments(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        return self._m[name], self._v[name]

    def n_parameters(self) -> int:
        return sum(t.values.size for t in self._params.values())

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.values.copy() for name, t in self._params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, values in snap.items():
            self._params[name].values = values.copy()


def adam_step(
    store: ParamStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Apply one bias-corrected Adam update from the grads on the store's tensors.

    Parameters without a gradient are treated as zero-gradient (values stay
    put, moments decay).  A non-finite gradient aborts naming the parameter.
    """
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in store.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.values)
        elif not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r} at step {t}")
        m = store._m[name]
        v = store._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.values -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def clip_global_norm(store: ParamStore, max_norm: float) -> float:
    """Scale all grads so their joint L2 norm is at most max_norm; returns the raw norm."""
    total = 0.0
    for _, p in store.items():
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for _, p in store.items():
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


def grad_check(
    f: Callable[[], Tensor],
    wrt: Iterable[tuple[str, Tensor]],
    h: float = 1e-5,
    max_coords_per_tensor: int | None = None,
    rng: np.random.Generator | None = None,
    filter_kinks: bool = True,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` re-evaluates the scalar loss from the current values of the ``wrt``
    tensors.  Error per coordinate is |analytic - numeric| / (|analytic| + 1e-8).
    For large parameter sets pass ``max_coords_per_tensor`` to spot-check a
    random subset of coordinates instead of all of them.

    Central differences are only a valid oracle where the loss is smooth at
    probe scale; a perturbation that crosses a ReLU kink (or sits in a region
    of extreme curvature, as deep recurrent compositions produce) yields a
    meaningless estimate.  With ``filter_kinks`` each coordinate is probed at
    h and h/2 and skipped when the two numeric estimates disagree with each
    other; the test never consults the analytic value, so a wrong tape
    gradient is still caught on every smooth coordinate.
    """
    wrt = list(wrt)
    for _, t in wrt:
        t.requires_grad = True
        t.grad = None
    loss = f()
    loss.backward()
    analytic = {name: (np.zeros_like(t.values) if t.grad is None else t.grad.copy()) for name, t in wrt}

    def central(flat: np.ndarray, c: int, step: float) -> float:
        orig = flat[c]
        flat[c] = orig + step
        f_plus = float(f().values)
        flat[c] = orig - step
        f_minus = float(f().values)
        flat[c] = orig
        return (f_plus - f_minus) / (2.0 * step)

    worst = 0.0
    for name, t in wrt:
        flat = t.values.reshape(-1)
        n = flat.size
        if max_coords_per_tensor is not None and n > max_coords_per_tensor:
            if rng is None:
                raise ValueError("rng required when subsampling coordinates")
            coords = rng.choice(n, size=max_coords_per_tensor, replace=False)
        else:
            coords = np.arange(n)
        a_flat = analytic[name].reshape(-1)
        for c in coords:
            numeric = central(flat, c, h)
            if filter_kinks:
                half = central(flat, c, 0.5 * h)
                if abs(numeric - half) / (abs(half) + 1e-8) > 0.02:
                    continue  # not locally smooth at probe scale; no valid oracle
            rel = abs(a_flat[c] - numeric) / (abs(a_flat[c]) + 1e-8)
            if rel > worst:
                worst = rel
    return worst


def save_checkpoint(store: ParamStore, path: str | Path, meta: dict | None = None) -> None:
    """Write parameters, Adam moments, and metadata as an .npz archive.

    Layout: one array per parameter under ``param/<name>``, moments under
    ``adam_m/<name>`` and ``adam_v/<name>``, plus a ``__meta__`` JSON blob
    holding the schema version, global step, parameter order, and any
    caller-provided metadata.
    """
    meta_blob = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "step": store.step,
        "param_order": store.names(),
        "extra": meta or {},
    }
    arrays: dict[str, np.ndarray] = {}
    for name, p in store.items():
        arrays[f"param/{name}"] = p.values
        arrays[f"adam_m/{name}"] = store._m[name]
        arrays[f"adam_v/{name}"] = store._v[name]
    arrays["__meta__"] = np.frombuffer(json.dumps(meta_blob, sort_keys=True).encode(), dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path) -> tuple[ParamStore, dict]:
    """Inverse of save_checkpoint; returns (store, caller metadata)."""
    path = Path(path)
    try:
        with np.load(path) as data:
            if "__meta__" not in data:
                raise SchemaError(f"{path}: not an intentcast checkpoint (missing __meta__)")
            meta_blob = json.loads(bytes(data["__meta__"]).decode())
            if meta_blob.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
                raise SchemaError(
                    f"{path}: unsupported checkpoint schema {meta_blob.get('schema_version')!r}"
                )
            store = ParamStore()
            for name in meta_blob["param_order"]:
                store.add(name, data[f"param/{name}"])
                store._m[name] = np.array(data[f"adam_m/{name}"], dtype=np.float64)
                store._v[name] = np.array(data[f"adam_v/{name}"], dtype=np.float64)
            store.step = int(meta_blob["step"])
            return store, meta_blob["extra"]
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: malformed checkpoint ({exc})") from exc
