"""Annotated-scenario data model: types, file IO, windowing, feature encoding.

Scenario files are UTF-8 JSON, one scenario per file:

    {
      "scenario_id": str,
      "fps": 5,
      "meta": {...},                       # weather etc., informational only
      "road_points": [{"x", "y", "role"}], # role in {"Entrance", "Exit"}
      "agents": [{
        "agent_id": str,
        "class": str,                      # one of the 8 raw classes
        "frames": [{"t", "x", "y", "action", "lane": [6 ints]}]
      }]
    }

Lane entries are ordered [left_turn, forward, right_turn, u_turn,
lane_change, valid]; valid = 0 means lane info is unknown and the other
five flags must be 0 (always the case for pedestrians).  Action strings
are the enum names below, picked per agent kind.

A corpus is a directory of scenario files plus a manifest JSON listing
relative paths and a split tag per scenario.

All coordinates are bird's-eye-view meters in a scenario-global frame;
per-window features are re-expressed relative to the agent's position at
the last observed frame, so they are invariant to translating the whole
scenario.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np

from .errors import ScenarioFormatError

FPS = 5
OBS_LEN = 15  # 3 s of history
FUT_LEN = 25  # 5 s horizon
WINDOW_LEN = OBS_LEN + FUT_LEN
INTENT_SHIFT_Q = 4  # intention = action 0.8 s ahead
FEATURE_DIM = 21  # 2 position + 8 vehicle one-hot + 5 pedestrian one-hot + 6 lane


class AgentKind(IntEnum):
    VEHICLE = 0
    PEDESTRIAN = 1


class AgentClass(str, Enum):
    PEDESTRIAN = "Pedestrian"
    CAR = "Car"
    BUS = "Bus"
    TRUCK = "Truck"
    VAN = "Van"
    MOTORCYCLIST = "Motorcyclist"
    BICYCLIST = "Bicyclist"
    OTHER = "Other"

    @property
    def kind(self) -> AgentKind:
        return AgentKind.PEDESTRIAN if self is AgentClass.PEDESTRIAN else AgentKind.VEHICLE


class VehicleAction(IntEnum):
    """Vehicle frame actions; the index is the one-hot / logit position."""

    MOVING_OTHER = 0
    STOPPED = 1
    PARKED = 2
    LANE_CHANGE = 3
    TURN_LEFT = 4
    TURN_RIGHT = 5
    CUT_IN = 6
    NONE = 7


class PedestrianAction(IntEnum):
    MOVING = 0
    WAITING_TO_CROSS = 1
    CROSSING = 2
    STOPPED = 3
    NONE = 4


VEHICLE_ACTION_NAMES = ["MovingOther", "Stopped", "Parked", "LaneChange", "TurnLeft", "TurnRight", "CutIn", "None"]
PEDESTRIAN_ACTION_NAMES = ["Moving", "WaitingToCross", "Crossing", "Stopped", "None"]
_VEHICLE_ACTION_BY_NAME = {n: VehicleAction(i) for i, n in enumerate(VEHICLE_ACTION_NAMES)}
_PEDESTRIAN_ACTION_BY_NAME = {n: PedestrianAction(i) for i, n in enumerate(PEDESTRIAN_ACTION_NAMES)}

N_VEHICLE_CLASSES = 8
N_PEDESTRIAN_CLASSES = 5

# Classes a live agent can actually be labeled with: CutIn-contaminated
# windows are dropped from training/eval and None is only the off-kind filler.
VEHICLE_ACTIVE_MASK = np.array([True] * 6 + [False, False])
PEDESTRIAN_ACTIVE_MASK = np.array([True] * 4 + [False])

Action = VehicleAction | PedestrianAction


def action_name(action: Action) -> str:
    names = VEHICLE_ACTION_NAMES if isinstance(action, VehicleAction) else PEDESTRIAN_ACTION_NAMES
    return names[int(action)]


def action_from_name(name: str, kind: AgentKind) -> Action:
    table = _VEHICLE_ACTION_BY_NAME if kind is AgentKind.VEHICLE else _PEDESTRIAN_ACTION_BY_NAME
    try:
        return table[name]
    except KeyError:
        raise ScenarioFormatError(f"unknown action {name!r} for kind {kind.name}") from None


class RoadRole(IntEnum):
    ENTRANCE = 0
    EXIT = 1


@dataclass(frozen=True)
class LaneFlags:
    """Permitted maneuvers for the lane the agent occupies, plus a validity bit.

    valid = 0 encodes unknown lane info (the annotation's -1): all five
    permission flags must then be 0.
    """

    left_turn: int = 0
    forward: int = 0
    right_turn: int = 0
    u_turn: int = 0
    lane_change: int = 0
    valid: int = 0

    def to_list(self) -> list[int]:
        return [self.left_turn, self.forward, self.right_turn, self.u_turn, self.lane_change, self.valid]

    @classmethod
    def from_list(cls, flags: list[int]) -> "LaneFlags":
        if len(flags) != 6 or any(f not in (0, 1) for f in flags):
            raise ScenarioFormatError(f"lane flags must be 6 binary values, got {flags!r}")
        lf = cls(*flags)
        if lf.valid == 0 and any(flags[:5]):
            raise ScenarioFormatError("lane flags with valid=0 must have all permissions 0")
        return lf


UNKNOWN_LANE = LaneFlags()


@dataclass(frozen=True)
class FrameState:
    t: int
    x: float
    y: float
    action: Action
    lane: LaneFlags = UNKNOWN_LANE

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass
class AgentTrack:
    agent_id: str
    agent_class: AgentClass
    frames: list[FrameState]

    @property
    def kind(self) -> AgentKind:
        return self.agent_class.kind

    def positions(self) -> np.ndarray:
        return np.array([[f.x, f.y] for f in self.frames])

    def actions(self) -> list[Action]:
        return [f.action for f in self.frames]


@dataclass(frozen=True)
class RoadPoint:
    x: float
    y: float
    role: RoadRole

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass
class Scenario:
    scenario_id: str
    tracks: list[AgentTrack]
    road_points: list[RoadPoint]
    meta: dict = field(default_factory=dict)
    fps: int = FPS

    def road_positions(self) -> np.ndarray:
        if not self.road_points:
            return np.zeros((0, 2))
        return np.array([[p.x, p.y] for p in self.road_points])

    def road_roles(self) -> np.ndarray:
        return np.array([int(p.role) for p in self.road_points], dtype=np.intp)


@dataclass
class PredictionWindow:
    """One training/eval instance: 15 observed + 25 future frames of one agent."""

    agent_id: str
    kind: AgentKind
    obs: list[FrameState]
    fut: list[FrameState]
    fut_intent: list[Action]
    neighbors: list[str] = field(default_factory=list)

    @property
    def start(self) -> int:
        return self.obs[0].t

    @property
    def origin(self) -> np.ndarray:
        return self.obs[-1].position

    def fut_positions(self) -> np.ndarray:
        return np.array([[f.x, f.y] for f in self.fut])

    def fut_actions(self) -> list[Action]:
        return [f.action for f in self.fut]


@dataclass
class SceneWindow:
    """All prediction windows of one scenario that share a start frame.

    These agents are rolled out jointly over one scene graph.
    """

    scenario: Scenario
    start: int
    windows: list[PredictionWindow]


# ---------------------------------------------------------------------------
# Validation and IO


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ScenarioFormatError(msg)


def _finite(value, ctx: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ScenarioFormatError(f"{ctx}: expected a number, got {value!r}") from None
    if not math.isfinite(v):
        raise ScenarioFormatError(f"{ctx}: non-finite coordinate {value!r}")
    return v


def scenario_from_dict(doc: dict, ctx: str = "scenario") -> Scenario:
    _require(isinstance(doc, dict), f"{ctx}: top level must be an object")
    for key in ("scenario_id", "fps", "agents"):
        _require(key in doc, f"{ctx}: missing required field {key!r}")
    scenario_id = doc["scenario_id"]
    _require(isinstance(scenario_id, str) and scenario_id, f"{ctx}: scenario_id must be a non-empty string")
    _require(doc["fps"] == FPS, f"{ctx}: fps must be {FPS}, got {doc['fps']!r}")
    meta = doc.get("meta", {})
    _require(isinstance(meta, dict), f"{ctx}: meta must be an object")

    road_points = []
    for i, rp in enumerate(doc.get("road_points", [])):
        rctx = f"{ctx}: road_points[{i}]"
        _require(isinstance(rp, dict), f"{rctx} must be an object")
        role_name = rp.get("role")
        _require(role_name in ("Entrance", "Exit"), f"{rctx}: role must be Entrance or Exit, got {role_name!r}")
        role = RoadRole.ENTRANCE if role_name == "Entrance" else RoadRole.EXIT
        road_points.append(RoadPoint(_finite(rp.get("x"), f"{rctx}.x"), _finite(rp.get("y"), f"{rctx}.y"), role))

    tracks = []
    seen_ids: set[str] = set()
    for a_i, agent in enumerate(doc["agents"]):
        actx = f"{ctx}: agents[{a_i}]"
        _require(isinstance(agent, dict), f"{actx} must be an object")
        agent_id = agent.get("agent_id")
        _require(isinstance(agent_id, str) and agent_id, f"{actx}: agent_id must be a non-empty string")
        _require(agent_id not in seen_ids, f"{actx}: duplicate agent_id {agent_id!r}")
        seen_ids.add(agent_id)
        try:
            agent_class = AgentClass(agent.get("class"))
        except ValueError:
            raise ScenarioFormatError(f"{actx} ({agent_id}): unknown class {agent.get('class')!r}") from None
        kind = agent_class.kind
        raw_frames = agent.get("frames")
        _require(isinstance(raw_frames, list) and raw_frames, f"{actx} ({agent_id}): frames must be a non-empty list")
        frames = []
        prev_t: int | None = None
        for f_i, fr in enumerate(raw_frames):
            fctx = f"{ctx}: agent {agent_id!r} frames[{f_i}]"
            _require(isinstance(fr, dict), f"{fctx} must be an object")
            t = fr.get("t")
            _require(isinstance(t, int), f"{fctx}: t must be an integer, got {t!r}")
            if prev_t is not None and t != prev_t + 1:
                raise ScenarioFormatError(
                    f"{ctx}: agent {agent_id!r} has a frame index gap or disorder at frames[{f_i}]"
                    f" (t={t} after t={prev_t})"
                )
            prev_t = t
            x = _finite(fr.get("x"), f"{fctx}.x")
            y = _finite(fr.get("y"), f"{fctx}.y")
            action = action_from_name_ctx(fr.get("action"), kind, fctx)
            try:
                lane = LaneFlags.from_list(fr.get("lane", [0] * 6))
            except ScenarioFormatError as exc:
                raise ScenarioFormatError(f"{fctx}: {exc}") from None
            if kind is AgentKind.PEDESTRIAN and lane.valid:
                raise ScenarioFormatError(f"{fctx}: pedestrians must have lane valid=0")
            frames.append(FrameState(t=t, x=x, y=y, action=action, lane=lane))
        tracks.append(AgentTrack(agent_id=agent_id, agent_class=agent_class, frames=frames))

    return Scenario(scenario_id=scenario_id, tracks=tracks, road_points=road_points, meta=meta)


def action_from_name_ctx(name, kind: AgentKind, ctx: str) -> Action:
    if not isinstance(name, str):
        raise ScenarioFormatError(f"{ctx}: action must be a string, got {name!r}")
    try:
        return action_from_name(name, kind)
    except ScenarioFormatError as exc:
        raise ScenarioFormatError(f"{ctx}: {exc}") from None


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "scenario_id": s.scenario_id,
        "fps": s.fps,
        "meta": s.meta,
        "road_points": [
            {"x": p.x, "y": p.y, "role": "Entrance" if p.role is RoadRole.ENTRANCE else "Exit"}
            for p in s.road_points
        ],
        "agents": [
            {
                "agent_id": tr.agent_id,
                "class": tr.agent_class.value,
                "frames": [
                    {"t": f.t, "x": f.x, "y": f.y, "action": action_name(f.action), "lane": f.lane.to_list()}
                    for f in tr.frames
                ],
            }
            for tr in s.tracks
        ],
    }


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FileNotFoundError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc, ctx=str(path))


def save_scenario(s: Scenario, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(scenario_to_dict(s), sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> list[tuple[Path, str]]:
    """Return (scenario_path, split) pairs; paths resolve relative to the manifest."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise FileNotFoundError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict) or "scenarios" not in doc:
        raise ScenarioFormatError(f"{path}: manifest must be an object with a 'scenarios' list")
    entries = []
    for i, entry in enumerate(doc["scenarios"]):
        if not isinstance(entry, dict) or "path" not in entry or "split" not in entry:
            raise ScenarioFormatError(f"{path}: scenarios[{i}] needs 'path' and 'split'")
        if entry["split"] not in ("train", "val", "test"):
            raise ScenarioFormatError(f"{path}: scenarios[{i}] has unknown split {entry['split']!r}")
        entries.append((path.parent / entry["path"], entry["split"]))
    return entries


def save_manifest(entries: list[tuple[str, str]], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"scenarios": [{"path": p, "split": split} for p, split in entries]}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_corpus(manifest_path: str | Path, split: str | None = None) -> list[Scenario]:
    scenarios = []
    for scen_path, scen_split in load_manifest(manifest_path):
        if split is None or scen_split == split:
            scenarios.append(load_scenario(scen_path))
    return scenarios


# ---------------------------------------------------------------------------
# Intention derivation and windowing


def derive_intentions(track: AgentTrack, q: int = INTENT_SHIFT_Q) -> list[Action]:
    """Per-frame intention labels: the action q frames ahead, clamped at track end."""
    if q < 0:
        raise ValueError("q must be >= 0")
    n = len(track.frames)
    return [track.frames[min(i + q, n - 1)].action for i in range(n)]


def window_scenario(s: Scenario) -> list[PredictionWindow]:
    """Slice every sufficiently long track into sliding prediction windows.

    Tracks need at least WINDOW_LEN (40) contiguous frames; the stride is one
    frame.  Windows whose future frames carry or imply a CutIn action are
    dropped entirely.  Neighbor ids list the other agents windowed at the
    same start frame, i.e. the set jointly rolled out per scene.
    """
    windows: list[PredictionWindow] = []
    for track in s.tracks:
        n = len(track.frames)
        if n < WINDOW_LEN:
            continue
        intents = derive_intentions(track)
        for start in range(n - WINDOW_LEN + 1):
            fut = track.frames[start + OBS_LEN : start + WINDOW_LEN]
            fut_intent = intents[start + OBS_LEN : start + WINDOW_LEN]
            if track.kind is AgentKind.VEHICLE and (
                any(f.action is VehicleAction.CUT_IN for f in fut)
                or any(a is VehicleAction.CUT_IN for a in fut_intent)
            ):
                continue
            windows.append(
                PredictionWindow(
                    agent_id=track.agent_id,
                    kind=track.kind,
                    obs=track.frames[start : start + OBS_LEN],
                    fut=fut,
                    fut_intent=fut_intent,
                )
            )
    by_start: dict[int, list[PredictionWindow]] = {}
    for w in windows:
        by_start.setdefault(w.start, []).append(w)
    for w in windows:
        w.neighbors = [o.agent_id for o in by_start[w.start] if o.agent_id != w.agent_id]
    return windows


def scene_windows(s: Scenario) -> list[SceneWindow]:
    """Group a scenario's windows by start frame, ordered by start."""
    by_start: dict[int, list[PredictionWindow]] = {}
    for w in window_scenario(s):
        by_start.setdefault(w.start, []).append(w)
    return [SceneWindow(scenario=s, start=t, windows=by_start[t]) for t in sorted(by_start)]


def encode_frame_features(w: PredictionWindow) -> np.ndarray:
    """Observation matrix (15 x 21) for one window.

    Per frame: [position - origin (2), vehicle action one-hot (8),
    pedestrian action one-hot (5), lane flags (6)].  The off-kind action
    slice is the fixed one-hot for that kind's None class, so the row width
    is 21 for both agent kinds and the last observed row's position slice is
    exactly (0, 0).
    """
    origin = w.origin
    rows = np.zeros((OBS_LEN, FEATURE_DIM))
    for i, f in enumerate(w.obs):
        rows[i, 0] = f.x - origin[0]
        rows[i, 1] = f.y - origin[1]
        if w.kind is AgentKind.VEHICLE:
            rows[i, 2 + int(f.action)] = 1.0
            rows[i, 10 + int(PedestrianAction.NONE)] = 1.0
        else:
            rows[i, 2 + int(VehicleAction.NONE)] = 1.0
            rows[i, 10 + int(f.action)] = 1.0
        rows[i, 15:21] = f.lane.to_list()
    return rows
