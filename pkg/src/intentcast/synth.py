"""Rule-based synthetic traffic scenarios around a four-way intersection.

Every agent follows a scripted timeline of piecewise constant-speed segments
(straights, circular arcs for turns, holds for stops), so the recorded action
label of each frame is consistent with the kinematics by construction:
Stopped/Parked/WaitingToCross frames have zero displacement, TurnLeft/
TurnRight frames lie on a quarter-circle arc, LaneChange frames carry the
lateral shift.  Labels at hold boundaries are conservatively reassigned to the
adjacent moving phase so stationary labels never coincide with motion.

Geometry (canonical frame, rotated per arm by exact quarter turns): roads are
two lanes per direction of width w; travel heading +x uses lane centers
y = -w/2 (inner) and y = -3w/2 (curb); the junction box spans |x|, |y| <= 2w.
Road entrance/exit markers sit at the four junction mouths.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable

import numpy as np

from .data import (
    Action,
    AgentClass,
    AgentTrack,
    FrameState,
    LaneFlags,
    PedestrianAction,
    RoadPoint,
    RoadRole,
    Scenario,
    VehicleAction,
    save_manifest,
    save_scenario,
)
from .errors import SchemaError

_ROT = [
    np.array([[1, 0], [0, 1]], dtype=float),
    np.array([[0, -1], [1, 0]], dtype=float),
    np.array([[-1, 0], [0, -1]], dtype=float),
    np.array([[0, 1], [-1, 0]], dtype=float),
]
_MIRROR_Y = np.array([[1, 0], [0, -1]], dtype=float)

_VEHICLE_CLASSES = [AgentClass.CAR, AgentClass.TRUCK, AgentClass.VAN, AgentClass.BUS,
                    AgentClass.MOTORCYCLIST, AgentClass.BICYCLIST, AgentClass.OTHER]
_VEHICLE_CLASS_P = [0.72, 0.07, 0.07, 0.04, 0.05, 0.04, 0.01]

_WEATHER = ["Sunny", "Dusk", "Cloudy", "Night"]
_ROAD_CONDITION = ["dry", "wet"]

# Kept per kind: the action enums are IntEnums with overlapping values, so a
# mixed set would match across kinds.
_STATIONARY_VEHICLE = {VehicleAction.STOPPED, VehicleAction.PARKED}
_STATIONARY_PEDESTRIAN = {PedestrianAction.STOPPED, PedestrianAction.WAITING_TO_CROSS}


@dataclass(frozen=True)
class MapConfig:
    lane_width_m: float = 3.5
    arm_length_m: float = 150.0


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    n_scenarios: int = 10
    duration_s: float = 12.6
    n_vehicles: int = 4
    n_pedestrians: int = 2
    turn_prob: float = 0.15
    stop_prob: float = 0.25
    lane_change_prob: float = 0.08
    map: MapConfig = field(default_factory=MapConfig)

    def validate(self) -> None:
        for name in ("turn_prob", "stop_prob", "lane_change_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise SchemaError(f"GenConfig.{name} must be in [0, 1], got {p}")
        if self.duration_s < 8.0:
            raise SchemaError(f"GenConfig.duration_s must be >= 8, got {self.duration_s}")
        if self.n_scenarios < 1:
            raise SchemaError("GenConfig.n_scenarios must be >= 1")
        if self.n_vehicles < 0 or self.n_pedestrians < 0:
            raise SchemaError("agent counts must be >= 0")
        if self.map.lane_width_m <= 0:
            raise SchemaError("lane width must be positive")
        if self.map.arm_length_m < 30:
            raise SchemaError("arm length must be >= 30 m")

    @classmethod
    def from_dict(cls, doc: dict) -> "GenConfig":
        doc = dict(doc)
        map_doc = doc.pop("map", {})
        known = {f for f in cls.__dataclass_fields__ if f != "map"}
        unknown = set(doc) - known
        if unknown:
            raise SchemaError(f"unknown GenConfig fields: {sorted(unknown)}")
        try:
            cfg = cls(map=MapConfig(**map_doc), **doc)
        except TypeError as exc:
            raise SchemaError(f"bad generator config: {exc}") from None
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


# --- scripted timelines -----------------------------------------------------


@dataclass
class _Seg:
    duration: float
    label: Action
    pos: Callable[[float], tuple[float, float]]


def _straight(p0, u, speed, length, label) -> _Seg:
    p0 = np.asarray(p0, dtype=float)
    u = np.asarray(u, dtype=float)
    dur = length / speed
    return _Seg(dur, label, lambda tau: tuple(p0 + u * (speed * tau)))


def _hold(p, duration, label) -> _Seg:
    p = tuple(np.asarray(p, dtype=float))
    return _Seg(duration, label, lambda tau: p)


def _arc(center, radius, a0, a1, speed, label) -> _Seg:
    center = np.asarray(center, dtype=float)
    dur = abs(a1 - a0) * radius / speed
    def pos(tau, _c=center, _r=radius, _a0=a0, _da=(a1 - a0), _dur=dur):
        a = _a0 + _da * (tau / _dur)
        return (_c[0] + _r * math.cos(a), _c[1] + _r * math.sin(a))
    return _Seg(dur, label, pos)


def _lateral(p0, speed, length, dy, label) -> _Seg:
    # Constant +x speed with a smoothstep lateral shift of dy.
    p0 = np.asarray(p0, dtype=float)
    dur = length / speed
    def pos(tau, _p0=p0, _v=speed, _len=length, _dy=dy, _dur=dur):
        s = min(max(tau / _dur, 0.0), 1.0)
        blend = s * s * (3.0 - 2.0 * s)
        return (_p0[0] + _v * tau, _p0[1] + _dy * blend)
    return _Seg(dur, label, pos)


def _sample_timeline(segs: list[_Seg], times: np.ndarray, idle_label: Action):
    """Evaluate a segment list at absolute times; hold the final point after the end."""
    bounds = np.cumsum([s.duration for s in segs])
    positions = np.zeros((len(times), 2))
    labels: list[Action] = []
    end_pos = segs[-1].pos(segs[-1].duration)
    for i, t in enumerate(times):
        j = int(np.searchsorted(bounds, t, side="right"))
        if j >= len(segs):
            positions[i] = end_pos
            labels.append(idle_label)
            continue
        tau = t - (bounds[j - 1] if j else 0.0)
        positions[i] = segs[j].pos(tau)
        labels.append(segs[j].label)
    return positions, labels


def _fix_stationary_boundaries(positions: np.ndarray, labels: list[Action], default_moving: Action) -> list[Action]:
    """Stationary labels must not sit on frames adjacent to actual motion."""
    n = len(labels)
    stationary = _STATIONARY_VEHICLE if isinstance(default_moving, VehicleAction) else _STATIONARY_PEDESTRIAN
    moved = np.linalg.norm(np.diff(positions, axis=0), axis=1) > 0.02
    out = list(labels)
    for k in range(n):
        if labels[k] not in stationary:
            continue
        moving_out = k < n - 1 and moved[k]
        moving_in = k > 0 and moved[k - 1]
        if not (moving_out or moving_in):
            continue
        borrow = None
        if moving_out and k < n - 1 and labels[k + 1] not in stationary:
            borrow = labels[k + 1]
        elif moving_in and k > 0 and labels[k - 1] not in stationary:
            borrow = labels[k - 1]
        out[k] = borrow if borrow is not None else default_moving
    return out


# --- vehicles ----------------------------------------------------------------


def _vehicle_lane_flags(canon_xy: np.ndarray, lane_y: float, box: float, w: float, parked: bool) -> LaneFlags:
    if parked:
        return LaneFlags()
    if canon_xy[0] < -box:
        if abs(lane_y + 0.5 * w) < 0.25 * w:  # inner lane
            return LaneFlags(left_turn=1, forward=1, right_turn=0, u_turn=0, lane_change=1, valid=1)
        return LaneFlags(left_turn=0, forward=1, right_turn=1, u_turn=0, lane_change=1, valid=1)
    return LaneFlags(left_turn=0, forward=1, right_turn=0, u_turn=0, lane_change=1, valid=1)


def _build_vehicle(cfg: GenConfig, rng: np.random.Generator, times: np.ndarray):
    """Returns (canonical positions, labels, lane flags, arm index)."""
    w = cfg.map.lane_width_m
    box = 2.0 * w
    arm_len = cfg.map.arm_length_m
    duration = cfg.duration_s
    arm = int(rng.integers(0, 4))
    mo = VehicleAction.MOVING_OTHER

    r = rng.random()
    parked = r < 0.25 * cfg.stop_prob
    stops = (not parked) and r < cfg.stop_prob
    turn = None
    lane_change = False
    if not parked:
        if rng.random() < cfg.turn_prob:
            turn = VehicleAction.TURN_LEFT if rng.random() < 0.5 else VehicleAction.TURN_RIGHT
        elif rng.random() < cfg.lane_change_prob:
            lane_change = True

    if parked:
        spot = np.array([-rng.uniform(0.25, 0.85) * arm_len, -(box + 0.6)])
        segs = [_hold(spot, duration + 1.0, VehicleAction.PARKED)]
        positions, labels = _sample_timeline(segs, times, VehicleAction.PARKED)
        flags = [LaneFlags() for _ in times]
        return positions, labels, flags, arm

    if turn is not None:
        cruise = rng.uniform(4.0, 10.0)
        v_turn = rng.uniform(3.0, 5.0)
        if turn is VehicleAction.TURN_LEFT:
            radius = 2.0 * w
            lane_y = -0.5 * w
            arc_start = np.array([0.5 * w - radius, lane_y])
            center = np.array([0.5 * w - radius, lane_y + radius])
            a0, a1 = -0.5 * math.pi, 0.0
            exit_p = np.array([0.5 * w, lane_y + radius])
            exit_u = np.array([0.0, 1.0])
        else:
            radius = w
            lane_y = -1.5 * w
            arc_start = np.array([-1.5 * w - radius, lane_y])
            center = np.array([-1.5 * w - radius, lane_y - radius])
            a0, a1 = 0.5 * math.pi, 0.0
            exit_p = np.array([-1.5 * w, lane_y - radius])
            exit_u = np.array([0.0, -1.0])
        slow_len = 6.0
        t_cruise = rng.uniform(0.08, 0.35) * duration
        t_cruise = min(t_cruise, max(0.0, (0.92 * arm_len - abs(arc_start[0]) - slow_len)) / cruise)
        x0 = arc_start[0] - slow_len - cruise * t_cruise
        segs = [
            _straight((x0, lane_y), (1, 0), cruise, cruise * t_cruise, mo),
            _straight((arc_start[0] - slow_len, lane_y), (1, 0), v_turn, slow_len - 1.0, mo),
        ]
        pre = np.array([arc_start[0] - 1.0, lane_y])
        if stops:
            segs.append(_hold(pre, rng.uniform(1.0, 2.0), VehicleAction.STOPPED))
        segs.append(_straight(pre, (1, 0), v_turn, 1.0, mo))
        segs.append(_arc(center, radius, a0, a1, v_turn, turn))
        segs.append(_straight(exit_p, exit_u, cruise, arm_len, mo))
        positions, labels = _sample_timeline(segs, times, VehicleAction.STOPPED)
    elif lane_change:
        cruise = rng.uniform(3.0, 12.0)
        from_curb = rng.random() < 0.5
        lane_y = -1.5 * w if from_curb else -0.5 * w
        dy = w if from_curb else -w
        lc_len = cruise * 3.0
        lc_end_x = -(box + 3.0) - rng.uniform(0.0, 15.0)
        lc_start_x = lc_end_x - lc_len
        if lc_start_x - 3.0 < -0.9 * arm_len:
            lane_change = False  # arm too short for the maneuver; drive straight
        else:
            t_cruise = rng.uniform(0.05, 0.35) * duration
            x0 = max(lc_start_x - cruise * t_cruise, -0.95 * arm_len)
            segs = [
                _straight((x0, lane_y), (1, 0), cruise, lc_start_x - x0, mo),
                _lateral((lc_start_x, lane_y), cruise, lc_len, dy, VehicleAction.LANE_CHANGE),
                _straight((lc_end_x, lane_y + dy), (1, 0), cruise, arm_len + abs(lc_end_x), mo),
            ]
            positions, labels = _sample_timeline(segs, times, VehicleAction.STOPPED)
            lane_y = lane_y + dy  # flags follow the target lane
    if turn is None and not lane_change and not parked:
        cruise = rng.uniform(3.0, 15.0)
        lane_y = -0.5 * w if rng.random() < 0.5 else -1.5 * w
        if stops:
            stop_x = -(box + 1.5)
            t_cruise = rng.uniform(0.10, 0.50) * duration
            t_cruise = min(t_cruise, max(5.0, 0.92 * arm_len - abs(stop_x)) / cruise)
            x0 = stop_x - cruise * t_cruise
            segs = [
                _straight((x0, lane_y), (1, 0), cruise, stop_x - x0, mo),
                _hold((stop_x, lane_y), rng.uniform(1.0, 3.0), VehicleAction.STOPPED),
                _straight((stop_x, lane_y), (1, 0), cruise, arm_len + abs(stop_x), mo),
            ]
        else:
            d0 = rng.uniform(box + 10.0, 0.92 * arm_len)
            avail = (d0 + arm_len - 2.0) / duration
            # Keep within the 3-15 m/s band; if even 3 m/s exhausts the arm
            # the vehicle parks at the far end (labeled Stopped by the
            # boundary pass), which is still label-consistent.
            v = min(cruise, avail) if avail >= 3.0 else cruise
            segs = [_straight((-d0, lane_y), (1, 0), v, d0 + arm_len, mo)]
        positions, labels = _sample_timeline(segs, times, VehicleAction.STOPPED)

    labels = _fix_stationary_boundaries(positions, labels, mo)
    flags = [_vehicle_lane_flags(positions[i], lane_y, box, w, False) for i in range(len(times))]
    return positions, labels, flags, arm


# --- pedestrians --------------------------------------------------------------


def _build_pedestrian(cfg: GenConfig, rng: np.random.Generator, times: np.ndarray):
    w = cfg.map.lane_width_m
    box = 2.0 * w
    duration = cfg.duration_s
    arm = int(rng.integers(0, 4))
    mirror = bool(rng.random() < 0.5)

    v_walk = rng.uniform(0.5, 2.0)
    v_cross = rng.uniform(1.2, 2.0)
    y_side = -(box + 1.2)
    x_curb = -(box + 1.0)
    t_curb = rng.uniform(0.10, 0.45) * duration
    walk_len = v_walk * t_curb
    x0 = x_curb - walk_len

    segs: list[_Seg] = []
    if rng.random() < 0.3 and walk_len > 2.0:
        # Pause partway along the approach walk.
        frac = rng.uniform(0.3, 0.7)
        segs.append(_straight((x0, y_side), (1, 0), v_walk, walk_len * frac, PedestrianAction.MOVING))
        segs.append(_hold((x0 + walk_len * frac, y_side), rng.uniform(1.0, 2.0), PedestrianAction.STOPPED))
        segs.append(_straight((x0 + walk_len * frac, y_side), (1, 0), v_walk, walk_len * (1 - frac), PedestrianAction.MOVING))
    else:
        segs.append(_straight((x0, y_side), (1, 0), v_walk, walk_len, PedestrianAction.MOVING))
    segs.append(_hold((x_curb, y_side), rng.uniform(1.0, 3.0), PedestrianAction.WAITING_TO_CROSS))
    segs.append(_straight((x_curb, y_side), (0, 1), v_cross, 2 * abs(y_side), PedestrianAction.CROSSING))
    segs.append(_straight((x_curb, -y_side), (1, 0), v_walk, 0.8 * cfg.map.arm_length_m, PedestrianAction.MOVING))

    positions, labels = _sample_timeline(segs, times, PedestrianAction.STOPPED)
    labels = _fix_stationary_boundaries(positions, labels, PedestrianAction.MOVING)
    if mirror:
        positions = positions @ _MIRROR_Y.T
    return positions, labels, arm


# --- scenario assembly ---------------------------------------------------------


def _road_points(cfg: GenConfig) -> list[RoadPoint]:
    w = cfg.map.lane_width_m
    box = 2.0 * w
    points = []
    for rot in _ROT:
        ent = rot @ np.array([-box, -w])
        ext = rot @ np.array([-box, w])
        points.append(RoadPoint(round(float(ent[0]), 6), round(float(ent[1]), 6), RoadRole.ENTRANCE))
        points.append(RoadPoint(round(float(ext[0]), 6), round(float(ext[1]), 6), RoadRole.EXIT))
    return points


def _generate_scenario(cfg: GenConfig, rng: np.random.Generator, scenario_id: str) -> Scenario:
    n_frames = int(round(cfg.duration_s * 5))
    times = np.arange(n_frames) / 5.0
    w = cfg.map.lane_width_m
    box = 2.0 * w

    tracks: list[AgentTrack] = []
    for i in range(cfg.n_vehicles):
        positions, labels, flags, arm = _build_vehicle(cfg, rng, times)
        world = positions @ _ROT[arm].T
        agent_class = _VEHICLE_CLASSES[rng.choice(len(_VEHICLE_CLASSES), p=_VEHICLE_CLASS_P)]
        frames = [
            FrameState(
                t=k,
                x=round(float(world[k, 0]), 6),
                y=round(float(world[k, 1]), 6),
                action=labels[k],
                lane=flags[k] if labels[k] is not VehicleAction.PARKED else LaneFlags(),
            )
            for k in range(n_frames)
        ]
        tracks.append(AgentTrack(agent_id=f"veh-{i:02d}", agent_class=agent_class, frames=frames))

    for i in range(cfg.n_pedestrians):
        positions, labels, arm = _build_pedestrian(cfg, rng, times)
        world = positions @ _ROT[arm].T
        frames = [
            FrameState(
                t=k,
                x=round(float(world[k, 0]), 6),
                y=round(float(world[k, 1]), 6),
                action=labels[k],
                lane=LaneFlags(),
            )
            for k in range(n_frames)
        ]
        tracks.append(AgentTrack(agent_id=f"ped-{i:02d}", agent_class=AgentClass.PEDESTRIAN, frames=frames))

    meta = {
        "weather": _WEATHER[rng.integers(0, len(_WEATHER))],
        "road_condition": _ROAD_CONDITION[rng.integers(0, len(_ROAD_CONDITION))],
    }
    return Scenario(scenario_id=scenario_id, tracks=tracks, road_points=_road_points(cfg), meta=meta)


def generate_corpus(cfg: GenConfig) -> list[Scenario]:
    """Deterministic corpus of scenarios; the seed fully fixes every byte."""
    cfg.validate()
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_scenarios)
    return [
        _generate_scenario(cfg, np.random.default_rng(children[i]), f"synth-{cfg.seed:08d}-{i:04d}")
        for i in range(cfg.n_scenarios)
    ]


def write_corpus(
    cfg: GenConfig,
    out_dir: str | Path,
    split_fracs: tuple[float, float, float] = (0.7, 0.15, 0.15),
) -> Path:
    """Generate, write one JSON file per scenario plus a manifest; returns the manifest path."""
    if abs(sum(split_fracs) - 1.0) > 1e-9 or any(f < 0 for f in split_fracs):
        raise SchemaError(f"split fractions must be nonnegative and sum to 1, got {split_fracs}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenarios = generate_corpus(cfg)
    n = len(scenarios)
    entries = []
    for i, s in enumerate(scenarios):
        frac = (i + 0.5) / n
        split = "train" if frac < split_fracs[0] else ("val" if frac < split_fracs[0] + split_fracs[1] else "test")
        fname = f"{s.scenario_id}.json"
        save_scenario(s, out_dir / fname)
        entries.append((fname, split))
    manifest_path = out_dir / "manifest.json"
    save_manifest(entries, manifest_path)
    (out_dir / "gen_config.json").write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return manifest_path
