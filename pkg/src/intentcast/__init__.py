"""Joint intention and trajectory forecasting for heterogeneous traffic agents."""

from .data import (
    AgentClass,
    AgentKind,
    AgentTrack,
    FrameState,
    LaneFlags,
    PedestrianAction,
    PredictionWindow,
    RoadPoint,
    RoadRole,
    Scenario,
    SceneWindow,
    VehicleAction,
    derive_intentions,
    encode_frame_features,
    load_scenario,
    save_scenario,
    scene_windows,
    window_scenario,
)
from .metrics import ConfusionMatrix, EvalSlice, ade_fde, intent_accuracy_horizon, min_ade_fde_n
from .model import ActiveMasks, ForecastResult, encode_observation, goal_posterior, goal_sample, init_params, rollout
from .optim import ParamStore, adam_step, grad_check, load_checkpoint, save_checkpoint
from .synth import GenConfig, MapConfig, generate_corpus, write_corpus
from .train import TrainConfig, class_weights, compute_losses, train

__version__ = "0.1.0"

__all__ = [
    "AgentClass",
    "AgentKind",
    "AgentTrack",
    "ActiveMasks",
    "ConfusionMatrix",
    "EvalSlice",
    "ForecastResult",
    "FrameState",
    "GenConfig",
    "LaneFlags",
    "MapConfig",
    "ParamStore",
    "PedestrianAction",
    "PredictionWindow",
    "RoadPoint",
    "RoadRole",
    "Scenario",
    "SceneWindow",
    "TrainConfig",
    "VehicleAction",
    "ade_fde",
    "adam_step",
    "class_weights",
    "compute_losses",
    "derive_intentions",
    "encode_frame_features",
    "encode_observation",
    "generate_corpus",
    "goal_posterior",
    "goal_sample",
    "grad_check",
    "init_params",
    "intent_accuracy_horizon",
    "load_checkpoint",
    "load_scenario",
    "min_ade_fde_n",
    "rollout",
    "save_checkpoint",
    "save_scenario",
    "scene_windows",
    "train",
    "window_scenario",
    "write_corpus",
]
