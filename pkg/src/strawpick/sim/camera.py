"""Pinhole wrist cameras rigidly mounted on the SCARA end-effector.

End-effector frame: origin at the gripper midpoint, x along the gripper
heading (world yaw), z up, y completing the right-handed triad.  Camera
frame: z along the optical axis, x right in the image, y down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from strawpick.kinematics import EndPose


class Behind:
    """Sentinel for points at or behind the camera plane."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Behind"


BEHIND = Behind()


def _mount(offset: np.ndarray, tilt_down: float) -> np.ndarray:
    """4x4 camera pose in the EE frame; tilt_down pitches the optical axis
    below the heading (negative values pitch up)."""
    fwd = np.array([math.cos(tilt_down), 0.0, -math.sin(tilt_down)])
    right = np.array([0.0, -1.0, 0.0])
    down = np.cross(fwd, right)
    T = np.eye(4)
    T[:3, 0], T[:3, 1], T[:3, 2] = right, down, fwd
    T[:3, 3] = offset
    return T


@dataclass(frozen=True)
class CameraModel:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    mount: np.ndarray  # 4x4, EE frame -> camera pose
    label: str

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


def default_cameras(size: int = 96) -> dict[str, CameraModel]:
    """Two wrist cameras: one 6 cm above the gripper looking forward-down,
    one 6 cm below looking forward-up."""
    scale = size / 96.0
    common = dict(width=size, height=size, fx=120.0 * scale, fy=120.0 * scale,
                  cx=size / 2.0, cy=size / 2.0)
    return {
        "wrist_up": CameraModel(label="wrist_up",
                                mount=_mount(np.array([-0.03, 0.0, 0.06]), 0.85),
                                **common),
        "wrist_down": CameraModel(label="wrist_down",
                                  mount=_mount(np.array([-0.03, 0.0, -0.06]), -0.35),
                                  **common),
    }


def ee_transform(pose: EndPose) -> np.ndarray:
    """4x4 world pose of the end-effector frame."""
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    T = np.eye(4)
    T[:3, :3] = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    T[:3, 3] = (pose.x, pose.y, pose.z)
    return T


def camera_world_transform(cam: CameraModel, ee_pose: EndPose) -> np.ndarray:
    return ee_transform(ee_pose) @ cam.mount


def world_to_camera(cam: CameraModel, ee_pose: EndPose,
                    points: np.ndarray) -> np.ndarray:
    """Map (N, 3) or (3,) world points into the camera frame."""
    T = camera_world_transform(cam, ee_pose)
    R, t = T[:3, :3], T[:3, 3]
    pts = np.atleast_2d(points)
    out = (pts - t) @ R
    return out[0] if points.ndim == 1 else out


def project_point(cam: CameraModel, ee_pose: EndPose, world_point):
    """Pinhole projection to pixel (u, v); BEHIND if the point has Z <= 0."""
    X, Y, Z = world_to_camera(cam, ee_pose, np.asarray(world_point, dtype=float))
    if Z <= 0.0:
        return BEHIND
    return (cam.cx + cam.fx * X / Z, cam.cy + cam.fy * Y / Z)
