"""End-to-end forecaster: observation encoding, CVAE goal proposal, and the
recurrent intention-conditioned trajectory decoder unrolled over the scene
graph.

Decoding runs jointly for all agents of a scene (and, in training, for all
scenes of a batch at once; scenes never share edges).  Internally the
decoder tracks per-agent displacement from the last observed position rather
than absolute coordinates: positions only ever enter the network through
pairwise differences, which keeps the whole pipeline translation-invariant.

Per decoding step m (25 steps = 5 s at 5 Hz):
  1. rebuild the scene graph at current positions,
  2. one round of attention message passing -> updated hidden x',
  3. per-kind intention head on x' -> masked softmax distribution,
  4. trajectory head on [x', vehicle-intent (8), pedestrian-intent (5)]
     -> velocity (m/frame); the off-kind slice is a fixed one-hot None,
  5. position += velocity,
  6. the decoder GRU consumes x' to advance the per-agent hidden state.

Training conditions on the ground-truth goal; inference samples goals from
the CVAE with the truncation trick (scale 0 single-shot, 1.1 multimodal).
Multimodal sample 0 is pinned to the latent mode so the single-shot
prediction is always nested in the sample set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import (
    FUT_LEN,
    OBS_LEN,
    AgentKind,
    PEDESTRIAN_ACTIVE_MASK,
    PedestrianAction,
    N_PEDESTRIAN_CLASSES,
    N_VEHICLE_CLASSES,
    SceneWindow,
    VEHICLE_ACTIVE_MASK,
    VehicleAction,
    encode_frame_features,
)
from .errors import NumericError, SchemaError, ShapeError
from .graph import attention_aggregate, build_edges, init_graph_params, road_embeddings
from .layers import gru_cell_step, init_gru, init_mlp, mlp_apply
from .optim import ParamStore

OBS_FEATURE_DIM = 21
OBS_HIDDEN = 64
DEC_HIDDEN = 80
GOAL_EMBED = 16
LATENT_DIM = 16

GOAL_ENC_SPEC = [(2, 8, "relu"), (8, 16, "relu"), (16, GOAL_EMBED, "none")]
POSTERIOR_SPEC = [(OBS_HIDDEN + GOAL_EMBED, 8, "relu"), (8, 50, "relu"), (50, 2 * LATENT_DIM, "none")]
GOAL_DEC_SPEC = [(OBS_HIDDEN + LATENT_DIM, 1024, "relu"), (1024, 512, "relu"), (512, 1024, "relu"), (1024, 2, "none")]
VEH_HEAD_SPEC = [(DEC_HIDDEN, 256, "relu"), (256, 128, "relu"), (128, N_VEHICLE_CLASSES, "none")]
PED_HEAD_SPEC = [(DEC_HIDDEN, 256, "relu"), (256, 128, "relu"), (128, N_PEDESTRIAN_CLASSES, "none")]
TRAJ_HEAD_SPEC = [
    (DEC_HIDDEN + N_VEHICLE_CLASSES + N_PEDESTRIAN_CLASSES, 80, "relu"),
    (80, 40, "relu"),
    (40, 2, "none"),
]

TRUNCATION_SINGLE = 0.0
TRUNCATION_MULTI = 1.1

DUMP_SCHEMA_VERSION = 1


def init_params(seed: int | np.random.Generator = 0) -> ParamStore:
    """Fresh model parameters with the architecture shapes fixed by the design."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    store = ParamStore()
    init_gru(store, "obs_gru", OBS_FEATURE_DIM, OBS_HIDDEN, rng)
    init_mlp(store, "goal_enc", GOAL_ENC_SPEC, rng)
    init_mlp(store, "posterior", POSTERIOR_SPEC, rng)
    init_mlp(store, "goal_dec", GOAL_DEC_SPEC, rng)
    init_gru(store, "dec_gru", DEC_HIDDEN, DEC_HIDDEN, rng)
    init_graph_params(store, rng)
    init_mlp(store, "veh_head", VEH_HEAD_SPEC, rng)
    init_mlp(store, "ped_head", PED_HEAD_SPEC, rng)
    init_mlp(store, "traj_head", TRAJ_HEAD_SPEC, rng)
    return store


@dataclass(frozen=True)
class ActiveMasks:
    """Intention classes the softmax normalizes over, per agent kind.

    Defaults to the full live taxonomies; training narrows them to classes
    actually present in the corpus and persists the result in the checkpoint.
    """

    vehicle: np.ndarray = None  # type: ignore[assignment]
    pedestrian: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.vehicle is None:
            object.__setattr__(self, "vehicle", VEHICLE_ACTIVE_MASK.copy())
        if self.pedestrian is None:
            object.__setattr__(self, "pedestrian", PEDESTRIAN_ACTIVE_MASK.copy())

    def to_dict(self) -> dict:
        return {"vehicle": self.vehicle.astype(int).tolist(), "pedestrian": self.pedestrian.astype(int).tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "ActiveMasks":
        return cls(vehicle=np.array(doc["vehicle"], dtype=bool), pedestrian=np.array(doc["pedestrian"], dtype=bool))


@dataclass
class SceneInputs:
    """Everything the decoder needs about one scene window (numpy, immutable in use)."""

    scenario_id: str
    start: int
    agent_ids: list[str]
    kinds: np.ndarray  # (A,) AgentKind values
    features: np.ndarray  # (A, 15, 21)
    origins: np.ndarray  # (A, 2) position at last observed frame
    last_velocities: np.ndarray  # (A, 2) m/frame at last observed step
    road_positions: np.ndarray  # (R, 2)
    road_roles: np.ndarray  # (R,)
    gt_goals: np.ndarray  # (A, 2) scenario frame
    gt_velocities: np.ndarray  # (A, 25, 2) m/frame
    intent_targets: np.ndarray  # (A, 25) kind-local class indices
    rare: bool = False  # future contains a turn or lane change

    @property
    def n_agents(self) -> int:
        return len(self.agent_ids)


def prepare_scene(sw: SceneWindow) -> SceneInputs:
    windows = sw.windows
    n = len(windows)
    features = np.zeros((n, OBS_LEN, OBS_FEATURE_DIM))
    origins = np.zeros((n, 2))
    last_vel = np.zeros((n, 2))
    gt_goals = np.zeros((n, 2))
    gt_vel = np.zeros((n, FUT_LEN, 2))
    targets = np.zeros((n, FUT_LEN), dtype=np.intp)
    kinds = np.zeros(n, dtype=np.intp)
    rare = False
    rare_actions = {VehicleAction.LANE_CHANGE, VehicleAction.TURN_LEFT, VehicleAction.TURN_RIGHT}
    for i, w in enumerate(windows):
        features[i] = encode_frame_features(w)
        origins[i] = w.origin
        last_vel[i] = w.obs[-1].position - w.obs[-2].position
        fut_pos = w.fut_positions()
        gt_goals[i] = fut_pos[-1]
        gt_vel[i] = np.diff(np.concatenate([origins[i][None, :], fut_pos], axis=0), axis=0)
        targets[i] = [int(a) for a in w.fut_intent]
        kinds[i] = int(w.kind)
        if w.kind is AgentKind.VEHICLE and (set(w.fut_intent) | set(w.fut_actions())) & rare_actions:
            rare = True
    return SceneInputs(
        scenario_id=sw.scenario.scenario_id,
        start=sw.start,
        agent_ids=[w.agent_id for w in windows],
        kinds=kinds,
        features=features,
        origins=origins,
        last_velocities=last_vel,
        road_positions=sw.scenario.road_positions(),
        road_roles=sw.scenario.road_roles(),
        gt_goals=gt_goals,
        gt_velocities=gt_vel,
        intent_targets=targets,
        rare=rare,
    )


def encode_observation(params: ParamStore, features: np.ndarray) -> Tensor:
    """Final GRU hidden state over the 15 observation frames: (A, 15, 21) -> (A, 64)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 2:
        features = features[None]
    if features.shape[1:] != (OBS_LEN, OBS_FEATURE_DIM):
        raise ShapeError(f"expected (A, {OBS_LEN}, {OBS_FEATURE_DIM}) features, got {features.shape}")
    h = ad.tensor(np.zeros((features.shape[0], OBS_HIDDEN)))
    for t in range(OBS_LEN):
        h = gru_cell_step(params, "obs_gru", ad.tensor(features[:, t, :]), h)
    return h


@dataclass
class PosteriorOutput:
    mu: Tensor  # (A, 16)
    log_sigma: Tensor  # (A, 16)
    z: Tensor  # (A, 16)
    goal_hat: Tensor  # (A, 2) agent-centric


def goal_posterior(params: ParamStore, obs_enc: Tensor, gt_goal_rel: np.ndarray, eta: np.ndarray) -> PosteriorOutput:
    """CVAE recognition + reconstruction pass (training only; goals agent-centric)."""
    emb = mlp_apply(params, "goal_enc", GOAL_ENC_SPEC, ad.tensor(gt_goal_rel))
    stats = mlp_apply(params, "posterior", POSTERIOR_SPEC, ad.concat_cols([obs_enc, emb]))
    mu = ad.slice_cols(stats, 0, LATENT_DIM)
    log_sigma = ad.slice_cols(stats, LATENT_DIM, 2 * LATENT_DIM)
    z = ad.add(mu, ad.mul(ad.exp(log_sigma), ad.tensor(np.asarray(eta, dtype=np.float64))))
    goal_hat = mlp_apply(params, "goal_dec", GOAL_DEC_SPEC, ad.concat_cols([obs_enc, z]))
    return PosteriorOutput(mu=mu, log_sigma=log_sigma, z=z, goal_hat=goal_hat)


def decode_goal(params: ParamStore, obs_enc_values: np.ndarray, z: np.ndarray) -> np.ndarray:
    with ad.no_grad():
        out = mlp_apply(
            params, "goal_dec", GOAL_DEC_SPEC, ad.concat_cols([ad.tensor(obs_enc_values), ad.tensor(z)])
        )
    return out.values


def goal_sample(
    params: ParamStore,
    obs_enc_values: np.ndarray,
    tau: float,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Sample agent-centric goals with truncation scale tau; tau = 0 is deterministic."""
    obs_enc_values = np.asarray(obs_enc_values, dtype=np.float64)
    n = obs_enc_values.shape[0]
    if tau == 0.0:
        z = np.zeros((n, LATENT_DIM))
    else:
        if rng is None:
            raise ValueError("rng required when tau > 0")
        z = tau * rng.standard_normal((n, LATENT_DIM))
    return decode_goal(params, obs_enc_values, z)


@dataclass
class RolloutResult:
    """Batched decoder outputs; agent axis concatenates the input scenes in order."""

    kinds: np.ndarray
    origins: np.ndarray
    velocities: list[Tensor]  # 25 x (A, 2)
    positions: np.ndarray  # (A, 25, 2) scenario frame
    veh_idx: np.ndarray
    ped_idx: np.ndarray
    veh_logits: list[Tensor] | None  # 25 x (V, 8); None in oracle mode
    ped_logits: list[Tensor] | None
    veh_probs: np.ndarray  # (V, 25, 8)
    ped_probs: np.ndarray  # (P, 25, 5)

    def velocity_values(self) -> np.ndarray:
        return np.stack([v.values for v in self.velocities], axis=1)

    def intent_distribution(self, agent: int) -> np.ndarray:
        """Own-kind per-frame distributions for one agent: (25, 8) or (25, 5)."""
        if self.kinds[agent] == int(AgentKind.VEHICLE):
            return self.veh_probs[np.searchsorted(self.veh_idx, agent)]
        return self.ped_probs[np.searchsorted(self.ped_idx, agent)]


def _oracle_slices(targets_now: np.ndarray, kinds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = kinds.shape[0]
    veh = np.zeros((n, N_VEHICLE_CLASSES))
    ped = np.zeros((n, N_PEDESTRIAN_CLASSES))
    for i in range(n):
        if kinds[i] == int(AgentKind.VEHICLE):
            veh[i, targets_now[i]] = 1.0
            ped[i, int(PedestrianAction.NONE)] = 1.0
        else:
            ped[i, targets_now[i]] = 1.0
            veh[i, int(VehicleAction.NONE)] = 1.0
    return veh, ped


def rollout(
    params: ParamStore,
    scenes: list[SceneInputs],
    obs_enc: Tensor,
    goals: np.ndarray,
    masks: ActiveMasks | None = None,
    steps: int = FUT_LEN,
    oracle_intents: np.ndarray | None = None,
    oracle_period: int = 1,
    scaling: str = "dim",
) -> RolloutResult:
    """Unroll the decoder for ``steps`` frames over one or more scenes jointly.

    ``obs_enc`` is (A_total, 64) over the scenes' agents in order; ``goals``
    are scenario-frame endpoints.  In oracle mode ``oracle_intents`` holds
    (A_total, steps) ground-truth kind-local classes, refreshed every
    ``oracle_period`` frames and held in between; intention heads are skipped.
    """
    masks = masks or ActiveMasks()
    kinds = np.concatenate([s.kinds for s in scenes])
    origins = np.concatenate([s.origins for s in scenes], axis=0)
    n_agents = origins.shape[0]
    if obs_enc.shape != (n_agents, OBS_HIDDEN):
        raise ShapeError(f"obs_enc shape {obs_enc.shape} != ({n_agents}, {OBS_HIDDEN})")
    road_pos = np.concatenate([s.road_positions for s in scenes], axis=0)
    road_roles = np.concatenate([s.road_roles for s in scenes])
    n_roads = road_pos.shape[0]
    veh_idx = np.flatnonzero(kinds == int(AgentKind.VEHICLE))
    ped_idx = np.flatnonzero(kinds == int(AgentKind.PEDESTRIAN))

    # Fixed off-kind intent slices: one-hot None rows for the other kind.
    veh_none = np.zeros((n_agents, N_VEHICLE_CLASSES))
    veh_none[ped_idx, int(VehicleAction.NONE)] = 1.0
    ped_none = np.zeros((n_agents, N_PEDESTRIAN_CLASSES))
    ped_none[veh_idx, int(PedestrianAction.NONE)] = 1.0

    goal_rel = np.asarray(goals, dtype=np.float64) - origins
    goal_emb = mlp_apply(params, "goal_enc", GOAL_ENC_SPEC, ad.tensor(goal_rel))
    hidden = ad.concat_cols([obs_enc, goal_emb])  # width 80 decoder init

    origins_nodes = np.concatenate([origins, road_pos], axis=0)
    road_zero = ad.tensor(np.zeros((n_roads, 2)))
    if n_roads:
        road_emb = road_embeddings(params, road_roles)

    displacement = ad.tensor(np.zeros((n_agents, 2)))
    velocity = ad.tensor(np.concatenate([s.last_velocities for s in scenes], axis=0))

    velocities: list[Tensor] = []
    positions = np.zeros((n_agents, steps, 2))
    veh_logits: list[Tensor] = []
    ped_logits: list[Tensor] = []
    veh_probs = np.zeros((len(veh_idx), steps, N_VEHICLE_CLASSES))
    ped_probs = np.zeros((len(ped_idx), steps, N_PEDESTRIAN_CLASSES))
    oracle = oracle_intents is not None

    for m in range(steps):
        # (1) adjacency at current positions, block-diagonal over scenes
        cur_pos = origins + displacement.values
        src_parts, dst_parts = [], []
        a_off, r_off = 0, 0
        for s in scenes:
            a = s.n_agents
            r = s.road_positions.shape[0]
            src, dst = build_edges(cur_pos[a_off : a_off + a], s.road_positions)
            roads = src >= a
            src = np.where(roads, src - a + n_agents + r_off, src + a_off)
            src_parts.append(src)
            dst_parts.append(dst + a_off)
            a_off += a
            r_off += r
        src = np.concatenate(src_parts) if src_parts else np.zeros(0, dtype=np.intp)
        dst = np.concatenate(dst_parts) if dst_parts else np.zeros(0, dtype=np.intp)

        # (2) message passing; positions enter only through differences
        disp_nodes = ad.concat_rows([displacement, road_zero])
        vel_nodes = ad.concat_rows([velocity, road_zero])
        v_src = ad.gather_rows(vel_nodes, src)
        v_dst = ad.gather_rows(vel_nodes, dst)
        pos_diff = ad.add(
            ad.tensor(origins_nodes[src] - origins_nodes[dst]),
            ad.sub(ad.gather_rows(disp_nodes, src), ad.gather_rows(disp_nodes, dst)),
        )
        edge_feats = ad.concat_cols([v_src, v_dst, pos_diff, ad.sub(v_src, v_dst)])
        updated, _alpha = attention_aggregate(
            params, hidden, road_emb if n_roads else None, edge_feats, src, dst, scaling=scaling
        )

        # (3) intention distributions for this frame
        if oracle:
            held = oracle_period * (m // oracle_period)
            veh_slice_np, ped_slice_np = _oracle_slices(oracle_intents[:, held], kinds)
            veh_slice = ad.tensor(veh_slice_np)
            ped_slice = ad.tensor(ped_slice_np)
            veh_probs[:, m] = veh_slice_np[veh_idx]
            ped_probs[:, m] = ped_slice_np[ped_idx]
        else:
            logits_v = mlp_apply(params, "veh_head", VEH_HEAD_SPEC, ad.gather_rows(updated, veh_idx))
            logits_p = mlp_apply(params, "ped_head", PED_HEAD_SPEC, ad.gather_rows(updated, ped_idx))
            probs_v = ad.masked_softmax(logits_v, masks.vehicle)
            probs_p = ad.masked_softmax(logits_p, masks.pedestrian)
            veh_logits.append(logits_v)
            ped_logits.append(logits_p)
            veh_probs[:, m] = probs_v.values
            ped_probs[:, m] = probs_p.values
            veh_slice = ad.add(ad.segment_sum(probs_v, veh_idx, n_agents), ad.tensor(veh_none))
            ped_slice = ad.add(ad.segment_sum(probs_p, ped_idx, n_agents), ad.tensor(ped_none))

        # (4) velocity conditioned on hidden state and intent
        velocity = mlp_apply(params, "traj_head", TRAJ_HEAD_SPEC, ad.concat_cols([updated, veh_slice, ped_slice]))
        if not np.all(np.isfinite(velocity.values)):
            raise NumericError(f"non-finite velocity at rollout step {m}")

        # (5) integrate, (6) advance the recurrent state
        displacement = ad.add(displacement, velocity)
        velocities.append(velocity)
        positions[:, m, :] = origins + displacement.values
        hidden = gru_cell_step(params, "dec_gru", updated, hidden)

    return RolloutResult(
        kinds=kinds,
        origins=origins,
        velocities=velocities,
        positions=positions,
        veh_idx=veh_idx,
        ped_idx=ped_idx,
        veh_logits=veh_logits if not oracle else None,
        ped_logits=ped_logits if not oracle else None,
        veh_probs=veh_probs,
        ped_probs=ped_probs,
    )


@dataclass
class ForecastResult:
    """One sampled future for every agent of one scene."""

    agent_ids: list[str]
    kinds: np.ndarray
    goals: np.ndarray  # (A, 2) scenario frame
    positions: np.ndarray  # (A, 25, 2)
    velocities: np.ndarray  # (A, 25, 2)
    intent_dists: list[np.ndarray]  # per agent (25, 8) or (25, 5)


def forecast_scene(
    params: ParamStore,
    scene: SceneInputs,
    goals: np.ndarray,
    masks: ActiveMasks | None = None,
    oracle_intents: np.ndarray | None = None,
    oracle_period: int = 1,
    scaling: str = "dim",
) -> ForecastResult:
    """Single-sample forecast of one scene with the given scenario-frame goals."""
    with ad.no_grad():
        obs_enc = encode_observation(params, scene.features)
        roll = rollout(
            params,
            [scene],
            obs_enc,
            goals,
            masks=masks,
            oracle_intents=oracle_intents,
            oracle_period=oracle_period,
            scaling=scaling,
        )
    return ForecastResult(
        agent_ids=scene.agent_ids,
        kinds=scene.kinds,
        goals=np.asarray(goals, dtype=np.float64),
        positions=roll.positions,
        velocities=roll.velocity_values(),
        intent_dists=[roll.intent_distribution(i) for i in range(scene.n_agents)],
    )


# ---------------------------------------------------------------------------
# Evaluation driver and prediction dump IO


@dataclass
class DumpRecord:
    """One (window, sample) row of the prediction dump."""

    scenario_id: str
    agent_id: str
    start: int
    kind: str  # "vehicle" | "pedestrian"
    sample: int
    n_samples: int
    tau: float
    intent_mode: str  # "predicted" | "oracle"
    oracle_fps: float | None
    goal: list[float]
    positions: list[list[float]]
    intent_probs: list[list[float]]


def oracle_period_from_fps(fps: float) -> int:
    period = round(5.0 / fps)
    if period < 1 or abs(5.0 / period - fps) > 0.35:
        raise SchemaError(f"unsupported oracle annotation frequency {fps} FPS")
    return int(period)


def run_forecasts(
    params: ParamStore,
    scenes: list[SceneInputs],
    n_samples: int,
    tau: float,
    seed: int = 0,
    masks: ActiveMasks | None = None,
    intent_mode: str = "predicted",
    oracle_fps: float | None = None,
    scaling: str = "dim",
) -> list[DumpRecord]:
    """Forecast every scene N times (sample 0 at the latent mode) and dump records.

    Deterministic given the seed; with tau = 0 every sample collapses onto the
    mode so the output does not depend on the seed at all.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if intent_mode not in ("predicted", "oracle"):
        raise ValueError(f"unknown intent mode {intent_mode!r}")
    period = 1
    if intent_mode == "oracle":
        if oracle_fps is None:
            raise ValueError("oracle mode requires oracle_fps")
        period = oracle_period_from_fps(oracle_fps)
    rng = np.random.default_rng(seed)
    records: list[DumpRecord] = []
    for scene in scenes:
        a = scene.n_agents
        with ad.no_grad():
            obs_enc = encode_observation(params, scene.features)
            enc_values = obs_enc.values
            # Latent draws: sample 0 pinned to the mode, the rest scaled by tau.
            z = np.zeros((n_samples, a, LATENT_DIM))
            if tau > 0.0 and n_samples > 1:
                z[1:] = tau * rng.standard_normal((n_samples - 1, a, LATENT_DIM))
            rep_enc = ad.tensor(np.tile(enc_values, (n_samples, 1)))
            goals_rel = decode_goal(params, rep_enc.values, z.reshape(n_samples * a, LATENT_DIM))
            goals = goals_rel + np.tile(scene.origins, (n_samples, 1))
            oracle = np.tile(scene.intent_targets, (n_samples, 1)) if intent_mode == "oracle" else None
            roll = rollout(
                params,
                [scene] * n_samples,
                rep_enc,
                goals,
                masks=masks,
                oracle_intents=oracle,
                oracle_period=period,
                scaling=scaling,
            )
        for n in range(n_samples):
            for i in range(a):
                gi = n * a + i
                records.append(
                    DumpRecord(
                        scenario_id=scene.scenario_id,
                        agent_id=scene.agent_ids[i],
                        start=scene.start,
                        kind="vehicle" if scene.kinds[i] == int(AgentKind.VEHICLE) else "pedestrian",
                        sample=n,
                        n_samples=n_samples,
                        tau=tau,
                        intent_mode=intent_mode,
                        oracle_fps=oracle_fps,
                        goal=[float(goals[gi, 0]), float(goals[gi, 1])],
                        positions=roll.positions[gi].tolist(),
                        intent_probs=roll.intent_distribution(gi).tolist(),
                    )
                )
    return records


def write_dump(records: list[DumpRecord], path: str | Path) -> None:
    """Prediction dump: JSON lines, one record per (window, sample)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema_version": DUMP_SCHEMA_VERSION, "kind": "prediction_dump"}) + "\n")
        for r in records:
            fh.write(json.dumps(r.__dict__, sort_keys=True) + "\n")


def read_dump(path: str | Path) -> list[DumpRecord]:
    path = Path(path)
    records = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        try:
            head = json.loads(header)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not a prediction dump ({exc.msg})") from None
        if head.get("kind") != "prediction_dump" or head.get("schema_version") != DUMP_SCHEMA_VERSION:
            raise SchemaError(f"{path}: unsupported dump header {head!r}")
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                records.append(DumpRecord(**doc))
            except (json.JSONDecodeError, TypeError) as exc:
                raise SchemaError(f"{path}:{line_no}: bad dump record ({exc})") from None
    return records
