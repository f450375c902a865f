"""Loss assembly, class weighting, rare-window augmentation, and the training loop.

The final objective is

    l_final = lambda1 * l_gpn + lambda2 * l_int + lambda3 * l_traj

with l_gpn = alpha1 * KL + alpha2 * ||goal_hat - G||^2 on the CVAE,
l_int the class-weighted intention cross-entropy, and l_traj the mean
Euclidean norm of the per-frame velocity error.  All three are averaged per
frame and per agent so magnitudes do not scale with the horizon; the weights
absorb the constant relative to a summed formulation.

Class weights are inverse frequencies of the future intention labels over the
training corpus, computed once per kind; classes that never occur get weight
zero and are dropped from the softmax support (the narrowed masks ship with
the checkpoint so evaluation sees the same distribution family).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import (
    FUT_LEN,
    AgentKind,
    N_PEDESTRIAN_CLASSES,
    N_VEHICLE_CLASSES,
    PEDESTRIAN_ACTIVE_MASK,
    PredictionWindow,
    VEHICLE_ACTIVE_MASK,
    load_corpus,
    scene_windows,
)
from .errors import NumericError, SchemaError
from .layers import kl_diag_gaussian_rows
from .model import (
    ActiveMasks,
    PosteriorOutput,
    RolloutResult,
    SceneInputs,
    encode_observation,
    goal_posterior,
    init_params,
    prepare_scene,
    rollout,
)
from .optim import ParamStore, adam_step, clip_global_norm, save_checkpoint

CHECKPOINT_NAME = "checkpoint.npz"
LOSS_LOG_NAME = "loss_log.csv"


@dataclass(frozen=True)
class TrainConfig:
    lambda1: float = 1.0
    lambda2: float = 100.0
    lambda3: float = 200.0
    alpha1: float = 1.0
    alpha2: float = 1.0
    lr: float = 1e-4
    batch: int = 32  # scene windows per step
    max_steps: int = 2000
    seed: int = 0
    augment_multiplier: int = 5  # sampler replication of turn/lane-change windows
    clip_norm: float = 10.0
    attention_scaling: str = "dim"

    def validate(self) -> None:
        for name in ("lambda1", "lambda2", "lambda3", "alpha1", "alpha2"):
            if getattr(self, name) < 0:
                raise SchemaError(f"TrainConfig.{name} must be >= 0")
        if self.lr <= 0:
            raise SchemaError("TrainConfig.lr must be positive")
        if self.batch < 1:
            raise SchemaError("TrainConfig.batch must be >= 1")
        if self.max_steps < 0:
            raise SchemaError("TrainConfig.max_steps must be >= 0")
        if self.augment_multiplier < 1:
            raise SchemaError("TrainConfig.augment_multiplier must be >= 1")
        if self.attention_scaling not in ("dim", "degree"):
            raise SchemaError("TrainConfig.attention_scaling must be 'dim' or 'degree'")

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise SchemaError(f"unknown TrainConfig fields: {sorted(unknown)}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


def class_weights(counts: np.ndarray) -> np.ndarray:
    """Inverse-frequency weights: w_c = total / count_c, zero for absent classes."""
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    total = counts.sum()
    if total == 0:
        raise ValueError("all class counts are zero")
    weights = np.zeros_like(counts)
    present = counts > 0
    weights[present] = total / counts[present]
    return weights


def count_intent_classes(windows: list[PredictionWindow]) -> tuple[np.ndarray, np.ndarray]:
    """Future intention label counts per kind over a window list."""
    veh = np.zeros(N_VEHICLE_CLASSES)
    ped = np.zeros(N_PEDESTRIAN_CLASSES)
    for w in windows:
        counts = veh if w.kind is AgentKind.VEHICLE else ped
        for a in w.fut_intent:
            counts[int(a)] += 1
    return veh, ped


@dataclass
class CorpusWeights:
    veh_weights: np.ndarray
    ped_weights: np.ndarray
    masks: ActiveMasks

    @classmethod
    def from_windows(cls, windows: list[PredictionWindow]) -> "CorpusWeights":
        veh_counts, ped_counts = count_intent_classes(windows)
        veh_w = class_weights(veh_counts) if veh_counts.sum() else np.zeros(N_VEHICLE_CLASSES)
        ped_w = class_weights(ped_counts) if ped_counts.sum() else np.zeros(N_PEDESTRIAN_CLASSES)
        masks = ActiveMasks(
            vehicle=VEHICLE_ACTIVE_MASK & (veh_counts > 0),
            pedestrian=PEDESTRIAN_ACTIVE_MASK & (ped_counts > 0),
        )
        return cls(veh_weights=veh_w, ped_weights=ped_w, masks=masks)


@dataclass
class LossBreakdown:
    l_gpn: float
    l_int: float
    l_traj: float
    l_final: float
    per_class_int: dict = field(default_factory=dict)  # kind -> per-class weighted NLL sums


def compute_losses(
    scenes: list[SceneInputs],
    roll: RolloutResult,
    post: PosteriorOutput,
    weights: CorpusWeights,
    cfg: TrainConfig,
) -> tuple[LossBreakdown, Tensor]:
    """Assemble the three loss terms; returns the breakdown and the total tensor."""
    n_agents = roll.origins.shape[0]
    gt_goals_rel = np.concatenate([s.gt_goals - s.origins for s in scenes], axis=0)
    gt_vel = np.concatenate([s.gt_velocities for s in scenes], axis=0)
    targets = np.concatenate([s.intent_targets for s in scenes], axis=0)
    steps = len(roll.velocities)

    kl = kl_diag_gaussian_rows(post.mu, post.log_sigma)
    err = ad.sub(post.goal_hat, ad.tensor(gt_goals_rel))
    recon = ad.sum_axis1(ad.mul(err, err))
    l_gpn = ad.mean_all(ad.add(ad.mul(kl, cfg.alpha1), ad.mul(recon, cfg.alpha2)))

    # Velocity loss: per-frame Euclidean norm of the error, averaged over
    # frames and agents.  The tiny clamp only guards sqrt'(0) at a perfect fit.
    traj_sum: Tensor | None = None
    for m in range(steps):
        e = ad.sub(roll.velocities[m], ad.tensor(gt_vel[:, m, :]))
        norms = ad.sqrt(ad.clamp_min(ad.sum_axis1(ad.mul(e, e)), 1e-30))
        s = ad.sum_all(norms)
        traj_sum = s if traj_sum is None else ad.add(traj_sum, s)
    l_traj = ad.mul(traj_sum, 1.0 / (steps * n_agents))

    # Weighted intention cross-entropy, per kind, averaged over frames and agents.
    per_class = {
        "vehicle": np.zeros(N_VEHICLE_CLASSES),
        "pedestrian": np.zeros(N_PEDESTRIAN_CLASSES),
    }
    int_sum: Tensor | None = None
    if roll.veh_logits is None:
        raise ValueError("compute_losses needs a rollout with predicted intentions")
    for m in range(steps):
        for logits, idx, w_vec, mask, key in (
            (roll.veh_logits[m], roll.veh_idx, weights.veh_weights, weights.masks.vehicle, "vehicle"),
            (roll.ped_logits[m], roll.ped_idx, weights.ped_weights, weights.masks.pedestrian, "pedestrian"),
        ):
            if len(idx) == 0:
                continue
            tgt = targets[idx, m]
            nll = ad.masked_nll(logits, mask, tgt)
            weighted = ad.mul(nll, w_vec[tgt][:, None])
            s = ad.sum_all(weighted)
            int_sum = s if int_sum is None else ad.add(int_sum, s)
            np.add.at(per_class[key], tgt, weighted.values[:, 0])
    if int_sum is None:
        int_sum = ad.tensor(0.0)
    l_int = ad.mul(int_sum, 1.0 / (steps * n_agents))

    total = ad.add(
        ad.add(ad.mul(l_gpn, cfg.lambda1), ad.mul(l_int, cfg.lambda2)),
        ad.mul(l_traj, cfg.lambda3),
    )
    breakdown = LossBreakdown(
        l_gpn=float(l_gpn.values),
        l_int=float(l_int.values),
        l_traj=float(l_traj.values),
        l_final=float(total.values),
        per_class_int=per_class,
    )
    return breakdown, total


class _SceneSampler:
    """Epoch-shuffled cyclic sampler with rare-window replication."""

    def __init__(self, scenes: list[SceneInputs], multiplier: int, rng: np.random.Generator):
        self._rng = rng
        base = []
        for i, s in enumerate(scenes):
            base.extend([i] * (multiplier if s.rare else 1))
        self._base = np.array(base, dtype=np.intp)
        self._queue: list[int] = []

    def next_batch(self, size: int) -> list[int]:
        out = []
        while len(out) < size:
            if not self._queue:
                self._queue = list(self._rng.permutation(self._base))
            out.append(self._queue.pop())
        return out


@dataclass
class TrainResult:
    store: ParamStore
    weights: CorpusWeights
    history: list[LossBreakdown]
    checkpoint_path: Path | None
    aborted_at: int | None = None


def prepare_corpus(manifest_path: str | Path, split: str = "train") -> tuple[list[SceneInputs], CorpusWeights]:
    scenarios = load_corpus(manifest_path, split=split)
    scenes: list[SceneInputs] = []
    windows: list[PredictionWindow] = []
    for s in scenarios:
        for sw in scene_windows(s):
            scenes.append(prepare_scene(sw))
            windows.extend(sw.windows)
    if not scenes:
        raise SchemaError(f"no usable prediction windows in split {split!r} of {manifest_path}")
    return scenes, CorpusWeights.from_windows(windows)


def train(
    manifest_path: str | Path,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
    split: str = "train",
    log_every: int = 1,
) -> TrainResult:
    """End-to-end training: deterministic given cfg.seed (init, order, latent draws).

    Writes ``checkpoint.npz`` plus an append-only ``loss_log.csv`` into
    ``out_dir`` when given.  A non-finite loss or gradient aborts with the
    step index after saving the last good parameters.
    """
    cfg.validate()
    scenes, weights = prepare_corpus(manifest_path, split=split)

    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    params = init_params(np.random.default_rng(seeds[0]))
    order_rng = np.random.default_rng(seeds[1])
    eta_rng = np.random.default_rng(seeds[2])
    sampler = _SceneSampler(scenes, cfg.augment_multiplier, order_rng)

    out_dir = Path(out_dir) if out_dir is not None else None
    log_rows: list[tuple] = []
    history: list[LossBreakdown] = []
    aborted_at: int | None = None

    meta = {
        "masks": weights.masks.to_dict(),
        "veh_class_weights": weights.veh_weights.tolist(),
        "ped_class_weights": weights.ped_weights.tolist(),
        "train_config": cfg.to_dict(),
        "attention_scaling": cfg.attention_scaling,
    }

    for step in range(cfg.max_steps):
        idx = sampler.next_batch(cfg.batch)
        batch = [scenes[i] for i in idx]
        features = np.concatenate([s.features for s in batch], axis=0)
        origins = np.concatenate([s.origins for s in batch], axis=0)
        gt_goals = np.concatenate([s.gt_goals for s in batch], axis=0)
        n_agents = origins.shape[0]

        obs_enc = encode_observation(params, features)
        eta = eta_rng.standard_normal((n_agents, 16))
        post = goal_posterior(params, obs_enc, gt_goals - origins, eta)
        roll = rollout(
            params, batch, obs_enc, gt_goals, masks=weights.masks, scaling=cfg.attention_scaling
        )
        breakdown, total = compute_losses(batch, roll, post, weights, cfg)

        if not np.isfinite(breakdown.l_final):
            aborted_at = step
            break
        params.zero_grads()
        total.backward()
        # Check grads before any parameter is touched so the saved checkpoint
        # is the last fully good state.
        norm = clip_global_norm(params, cfg.clip_norm)
        if not np.isfinite(norm):
            aborted_at = step
            break
        adam_step(params, cfg.lr)
        history.append(breakdown)
        if step % log_every == 0:
            log_rows.append((step, breakdown.l_gpn, breakdown.l_int, breakdown.l_traj, breakdown.l_final))

    checkpoint_path = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        checkpoint_path = out_dir / CHECKPOINT_NAME
        save_checkpoint(params, checkpoint_path, meta)
        with open(out_dir / LOSS_LOG_NAME, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "l_gpn", "l_int", "l_traj", "l_final"])
            for row in log_rows:
                writer.writerow([row[0]] + [f"{v:.6f}" for v in row[1:]])
        (out_dir / "train_config.json").write_text(
            json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    if aborted_at is not None:
        raise NumericError(
            f"training aborted at step {aborted_at}: non-finite loss or gradient"
            + (f"; last good checkpoint saved to {checkpoint_path}" if checkpoint_path else "")
        )
    return TrainResult(
        store=params,
        weights=weights,
        history=history,
        checkpoint_path=checkpoint_path,
        aborted_at=aborted_at,
    )
