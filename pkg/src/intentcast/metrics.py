"""Evaluation metrics and sliced reporting.

Trajectory quality uses ADE (mean Euclidean error over the 25 future frames)
and FDE (error at the final frame); for multimodal dumps the minimum over the
N samples is taken independently for each.  Intention quality is frame-wise
accuracy over the horizon (single-sample, plus a best-of-N reading where a
frame counts if any sample's argmax matches) and per-kind confusion matrices.

Reports are sliced by agent category: Pedestrians, Vehicles (non-static,
operationalized as cumulative future path length >= 1 m), LaneChange and Turn
(any such label among the window's future intentions), and All.  A window may
fall in several slices.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .data import (
    AgentKind,
    PEDESTRIAN_ACTION_NAMES,
    PredictionWindow,
    VEHICLE_ACTION_NAMES,
    VehicleAction,
)
from .errors import SchemaError
from .model import DumpRecord

# Classes reported on, per kind (the live taxonomy; None/CutIn never occur).
VEHICLE_REPORT_CLASSES = 6
PEDESTRIAN_REPORT_CLASSES = 4

NON_STATIC_MIN_PATH_M = 1.0


class EvalSlice(str, Enum):
    PEDESTRIANS = "Pedestrians"
    VEHICLES_MOVING = "Vehicles"
    LANE_CHANGE = "LaneChange"
    TURN = "Turn"
    ALL = "All"


def ade_fde(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float]:
    """Average and final displacement error in meters for one trajectory pair."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"trajectory shape mismatch: {pred.shape} vs {gt.shape}")
    err = np.linalg.norm(pred - gt, axis=-1)
    return float(err.mean()), float(err[-1])


def min_ade_fde_n(preds: np.ndarray, gt: np.ndarray) -> tuple[float, float]:
    """Minimum ADE and FDE over N sampled trajectories, minimized independently."""
    preds = np.asarray(preds, dtype=np.float64)
    if preds.ndim != 3 or preds.shape[0] < 1:
        raise ValueError("preds must be (N, T, 2) with N >= 1")
    pairs = [ade_fde(p, gt) for p in preds]
    return min(a for a, _ in pairs), min(f for _, f in pairs)


def intent_accuracy_horizon(
    pred_intents: list[np.ndarray],
    gt_intents: list[np.ndarray],
    mode: str = "single",
) -> np.ndarray:
    """Per-frame accuracy pooled over windows.

    ``pred_intents`` holds one (N, T) argmax array per window; ``single``
    scores sample 0 only, ``best-sample`` counts a frame as correct when any
    of the N samples matches the ground truth there.
    """
    if mode not in ("single", "best-sample"):
        raise ValueError(f"unknown accuracy mode {mode!r}")
    if len(pred_intents) != len(gt_intents):
        raise ValueError("pred/gt window counts differ")
    if not pred_intents:
        return np.zeros(0)
    horizon = np.asarray(pred_intents[0]).shape[1]
    correct = np.zeros(horizon)
    for pred, gt in zip(pred_intents, gt_intents):
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if mode == "single":
            correct += pred[0] == gt
        else:
            correct += (pred == gt[None, :]).any(axis=0)
    return correct / len(pred_intents)


@dataclass
class ConfusionMatrix:
    """Square frame-count matrix (rows = ground truth, cols = prediction)."""

    kind: AgentKind
    counts: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        n = VEHICLE_REPORT_CLASSES if self.kind is AgentKind.VEHICLE else PEDESTRIAN_REPORT_CLASSES
        if self.counts is None:
            self.counts = np.zeros((n, n), dtype=np.int64)
        elif self.counts.shape != (n, n):
            raise ValueError(f"confusion matrix for {self.kind.name} must be {n}x{n}")

    @property
    def class_names(self) -> list[str]:
        names = VEHICLE_ACTION_NAMES if self.kind is AgentKind.VEHICLE else PEDESTRIAN_ACTION_NAMES
        return names[: self.counts.shape[0]]

    def add(self, pred: np.ndarray, gt: np.ndarray) -> None:
        pred = np.asarray(pred, dtype=np.intp)
        gt = np.asarray(gt, dtype=np.intp)
        n = self.counts.shape[0]
        if pred.shape != gt.shape:
            raise ValueError("pred/gt length mismatch")
        if np.any((pred < 0) | (pred >= n)) or np.any((gt < 0) | (gt >= n)):
            raise ValueError(f"label outside the {n} active {self.kind.name} classes")
        np.add.at(self.counts, (gt, pred), 1)

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.kind is not self.kind:
            raise ValueError("cannot merge confusion matrices of different kinds")
        return ConfusionMatrix(kind=self.kind, counts=self.counts + other.counts)


def confusion(pred_seqs: list[np.ndarray], gt_seqs: list[np.ndarray], kind: AgentKind) -> ConfusionMatrix:
    cm = ConfusionMatrix(kind=kind)
    for pred, gt in zip(pred_seqs, gt_seqs):
        cm.add(pred, gt)
    return cm


def argmax_intents(dists: np.ndarray) -> np.ndarray:
    """Frame-wise argmax over class distributions; ties resolve to the lowest index."""
    return np.argmax(np.asarray(dists), axis=-1)


def window_slices(w: PredictionWindow) -> set[EvalSlice]:
    slices = {EvalSlice.ALL}
    if w.kind is AgentKind.PEDESTRIAN:
        slices.add(EvalSlice.PEDESTRIANS)
        return slices
    path = float(np.linalg.norm(np.diff(w.fut_positions(), axis=0), axis=1).sum())
    path += float(np.linalg.norm(w.fut_positions()[0] - w.origin))
    if path >= NON_STATIC_MIN_PATH_M:
        slices.add(EvalSlice.VEHICLES_MOVING)
    if any(a is VehicleAction.LANE_CHANGE for a in w.fut_intent):
        slices.add(EvalSlice.LANE_CHANGE)
    if any(a in (VehicleAction.TURN_LEFT, VehicleAction.TURN_RIGHT) for a in w.fut_intent):
        slices.add(EvalSlice.TURN)
    return slices


@dataclass
class ReportSummary:
    n_samples: int
    tau: float
    slices: dict  # slice name -> {"n_windows", "ade", "fde"} ("absent" when empty)
    horizon: dict  # kind -> {"single": [...], "best_sample": [...]}
    confusion: dict  # kind -> {"classes": [...], "counts": [[...]]}

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "tau": self.tau,
            "slices": self.slices,
            "horizon": self.horizon,
            "confusion": self.confusion,
        }


def _group_records(records: list[DumpRecord]) -> dict[tuple[str, str, int], list[DumpRecord]]:
    groups: dict[tuple[str, str, int], list[DumpRecord]] = {}
    for r in records:
        groups.setdefault((r.scenario_id, r.agent_id, r.start), []).append(r)
    for key, group in groups.items():
        group.sort(key=lambda r: r.sample)
        if [r.sample for r in group] != list(range(group[0].n_samples)):
            raise SchemaError(f"dump is missing samples for window {key}")
    return groups


def slice_and_report(
    records: list[DumpRecord],
    windows_by_id: dict[tuple[str, str, int], PredictionWindow],
    out_dir: str | Path | None = None,
) -> ReportSummary:
    """Aggregate a prediction dump against ground truth into report tables.

    ``windows_by_id`` maps (scenario_id, agent_id, start) to the corpus
    window; every dump window must resolve or the ids are considered
    mismatched.  When ``out_dir`` is given the tables are also written as
    delimited text plus a JSON summary.
    """
    if not records:
        raise SchemaError("empty prediction dump")
    groups = _group_records(records)
    n_samples = records[0].n_samples
    tau = records[0].tau

    slice_err: dict[EvalSlice, list[tuple[float, float]]] = {s: [] for s in EvalSlice}
    horizon_preds: dict[AgentKind, list[np.ndarray]] = {k: [] for k in AgentKind}
    horizon_gts: dict[AgentKind, list[np.ndarray]] = {k: [] for k in AgentKind}
    conf = {k: ConfusionMatrix(kind=k) for k in AgentKind}

    for key, group in groups.items():
        if key not in windows_by_id:
            raise SchemaError(
                f"dump window {key} not found in the corpus (id mismatch between dump and corpus)"
            )
        w = windows_by_id[key]
        gt_pos = w.fut_positions()
        gt_int = np.array([int(a) for a in w.fut_intent], dtype=np.intp)
        preds = np.array([r.positions for r in group])
        ades = [ade_fde(p, gt_pos) for p in preds]
        min_ade = min(a for a, _ in ades)
        min_fde = min(f for _, f in ades)
        for s in window_slices(w):
            slice_err[s].append((min_ade, min_fde))

        kind = w.kind
        pred_ints = np.stack([argmax_intents(np.array(r.intent_probs)) for r in group])
        horizon_preds[kind].append(pred_ints)
        horizon_gts[kind].append(gt_int)
        # Confusion uses the trajectory-selected sample: the one with minimal ADE.
        best = int(np.argmin([a for a, _ in ades]))
        conf[kind].add(pred_ints[best], gt_int)

    slices_doc = {}
    for s in EvalSlice:
        pairs = slice_err[s]
        if pairs:
            slices_doc[s.value] = {
                "n_windows": len(pairs),
                "ade": round(float(np.mean([a for a, _ in pairs])), 6),
                "fde": round(float(np.mean([f for _, f in pairs])), 6),
            }
        else:
            slices_doc[s.value] = {"n_windows": 0, "absent": True}

    horizon_doc = {}
    for kind, name in ((AgentKind.VEHICLE, "vehicle"), (AgentKind.PEDESTRIAN, "pedestrian")):
        if horizon_preds[kind]:
            single = intent_accuracy_horizon(horizon_preds[kind], horizon_gts[kind], "single")
            best = intent_accuracy_horizon(horizon_preds[kind], horizon_gts[kind], "best-sample")
            horizon_doc[name] = {
                "single": [round(v, 6) for v in single],
                "best_sample": [round(v, 6) for v in best],
            }
        else:
            horizon_doc[name] = {"absent": True}

    confusion_doc = {
        name: {"classes": conf[kind].class_names, "counts": conf[kind].counts.tolist()}
        for kind, name in ((AgentKind.VEHICLE, "vehicle"), (AgentKind.PEDESTRIAN, "pedestrian"))
    }

    summary = ReportSummary(
        n_samples=n_samples, tau=tau, slices=slices_doc, horizon=horizon_doc, confusion=confusion_doc
    )
    if out_dir is not None:
        write_report(summary, out_dir)
    return summary


def write_report(summary: ReportSummary, out_dir: str | Path) -> None:
    """Write metrics.csv, horizon and confusion tables, and summary.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slice", "n_windows", "ade", "fde"])
        for name in [s.value for s in EvalSlice]:
            doc = summary.slices[name]
            if doc.get("absent"):
                writer.writerow([name, 0, "", ""])
            else:
                writer.writerow([name, doc["n_windows"], f"{doc['ade']:.6f}", f"{doc['fde']:.6f}"])

    for kind_name in ("vehicle", "pedestrian"):
        doc = summary.horizon[kind_name]
        with open(out_dir / f"horizon_accuracy_{kind_name}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "single", "best_sample"])
            if not doc.get("absent"):
                for i, (s, b) in enumerate(zip(doc["single"], doc["best_sample"])):
                    writer.writerow([i, f"{s:.6f}", f"{b:.6f}"])
        cdoc = summary.confusion[kind_name]
        with open(out_dir / f"confusion_{kind_name}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["gt\\pred"] + cdoc["classes"])
            for cls, row in zip(cdoc["classes"], cdoc["counts"]):
                writer.writerow([cls] + row)

    (out_dir / "summary.json").write_text(
        json.dumps(summary.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def index_windows(scenarios) -> dict[tuple[str, str, int], PredictionWindow]:
    """Window lookup keyed the way dump records reference them."""
    from .data import window_scenario

    index = {}
    for s in scenarios:
        for w in window_scenario(s):
            index[(s.scenario_id, w.agent_id, w.start)] = w
    return index
