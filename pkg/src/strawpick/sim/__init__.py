from strawpick.sim.scene import (
    Berry,
    InvalidState,
    Leaf,
    Scene,
    load_state_table,
    make_scene,
)
from strawpick.sim.camera import BEHIND, Behind, CameraModel, default_cameras, project_point
from strawpick.sim.render import render_camera
from strawpick.sim.env import (
    EnvConfig,
    NotTerminal,
    Observation,
    PickEnv,
    StepInfo,
    TerminalEnv,
    episode_outcome,
)

__all__ = [
    "BEHIND",
    "Behind",
    "Berry",
    "CameraModel",
    "EnvConfig",
    "InvalidState",
    "Leaf",
    "NotTerminal",
    "Observation",
    "PickEnv",
    "Scene",
    "StepInfo",
    "TerminalEnv",
    "default_cameras",
    "episode_outcome",
    "load_state_table",
    "make_scene",
    "project_point",
    "render_camera",
]
