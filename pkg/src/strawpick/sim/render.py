"""Deterministic painter's-algorithm rasterizer for the wrist cameras.

Berries are filled discs (red if ripe, white otherwise), stems green line
segments from anchor to berry, leaves green ellipses, gripper fingers gray
bars.  Primitives are depth-sorted on their camera-frame Z and drawn
far-to-near onto a uniform background.
"""

from __future__ import annotations

import math

import cv2
import numpy as np

from strawpick.kinematics import EndPose
from strawpick.sim.camera import CameraModel, world_to_camera
from strawpick.sim.scene import Scene

BACKGROUND = (70, 75, 80)
RIPE_COLOR = (200, 30, 30)
UNRIPE_COLOR = (235, 235, 225)
STEM_COLOR = (40, 160, 60)
LEAF_COLOR = (50, 140, 70)
GRIPPER_COLOR = (150, 150, 155)

FINGER_LENGTH = 0.035
FINGER_RADIUS = 0.003

MIN_Z = 0.01  # near clip plane, m


def finger_offsets(grip: float) -> float:
    """Lateral half-opening of the fingers for a normalized aperture."""
    return 0.004 + 0.016 * float(np.clip(grip, 0.0, 1.0))


def _px(cam: CameraModel, p_cam: np.ndarray) -> tuple[int, int] | None:
    X, Y, Z = p_cam
    if Z <= MIN_Z:
        return None
    return (int(round(cam.cx + cam.fx * X / Z)),
            int(round(cam.cy + cam.fy * Y / Z)))


def render_camera(scene: Scene, ee_pose: EndPose, cam: CameraModel,
                  grip: float = 1.0) -> np.ndarray:
    """Rasterize one camera view; returns an (H, W, 3) uint8 RGB image."""
    img = np.empty((cam.height, cam.width, 3), dtype=np.uint8)
    img[:] = BACKGROUND

    prims: list[tuple[float, str, tuple]] = []

    for berry in scene.berries:
        c_cam = world_to_camera(cam, ee_pose, berry.cur_pos)
        prims.append((c_cam[2], "berry", (c_cam, berry.radius,
                                          RIPE_COLOR if berry.ripe else UNRIPE_COLOR)))
        if berry.attached:
            top = berry.cur_pos + np.array([0.0, 0.0, berry.radius])
            a_cam = world_to_camera(cam, ee_pose, berry.anchor)
            t_cam = world_to_camera(cam, ee_pose, top)
            depth = 0.5 * (a_cam[2] + t_cam[2])
            prims.append((depth, "stem", (a_cam, t_cam)))

    for leaf in scene.leaves:
        c_cam = world_to_camera(cam, ee_pose, leaf.cur_center)
        prims.append((c_cam[2], "leaf", (c_cam, leaf.axes, leaf.orientation)))

    heading = np.array([math.cos(ee_pose.yaw), math.sin(ee_pose.yaw), 0.0])
    left = np.array([-heading[1], heading[0], 0.0])
    tip = ee_pose.xyz
    half = finger_offsets(grip)
    for side in (+1.0, -1.0):
        top_w = tip + side * half * left
        bot_w = top_w - np.array([0.0, 0.0, FINGER_LENGTH])
        t_cam = world_to_camera(cam, ee_pose, top_w)
        b_cam = world_to_camera(cam, ee_pose, bot_w)
        prims.append((0.5 * (t_cam[2] + b_cam[2]), "finger", (t_cam, b_cam)))

    # Far to near; ties broken by primitive kind then insertion order so the
    # ordering is fully deterministic.
    order = sorted(range(len(prims)), key=lambda i: (-prims[i][0], i))
    for idx in order:
        _, kind, payload = prims[idx]
        if kind == "berry":
            c_cam, radius, color = payload
            center = _px(cam, c_cam)
            if center is None:
                continue
            r_px = max(1, int(round(cam.fx * radius / c_cam[2])))
            cv2.circle(img, center, r_px, color, thickness=-1, lineType=cv2.LINE_8)
        elif kind == "stem":
            a_cam, t_cam = payload
            pa, pt = _px(cam, a_cam), _px(cam, t_cam)
            if pa is None or pt is None:
                continue
            cv2.line(img, pa, pt, STEM_COLOR, thickness=1, lineType=cv2.LINE_8)
        elif kind == "leaf":
            c_cam, axes, orientation = payload
            center = _px(cam, c_cam)
            if center is None:
                continue
            ax = (max(1, int(round(cam.fx * axes[0] / c_cam[2]))),
                  max(1, int(round(cam.fy * axes[1] / c_cam[2]))))
            cv2.ellipse(img, center, ax, math.degrees(orientation), 0, 360,
                        LEAF_COLOR, thickness=-1, lineType=cv2.LINE_8)
        else:  # finger
            t_cam, b_cam = payload
            pt, pb = _px(cam, t_cam), _px(cam, b_cam)
            if pt is None or pb is None:
                continue
            depth = max(MIN_Z, 0.5 * (t_cam[2] + b_cam[2]))
            thick = max(1, int(round(cam.fx * 2 * FINGER_RADIUS / depth)))
            cv2.line(img, pt, pb, GRIPPER_COLOR, thickness=thick,
                     lineType=cv2.LINE_8)
    return img
