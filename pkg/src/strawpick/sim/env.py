"""Quasi-static picking environment with step/reset semantics.

Per step: joints servo toward the commanded targets under a rate limit, the
gripper body pushes un-grasped objects out of its volume, un-contacted
objects relax toward their rest positions, and a berry detaches once the
closed gripper has captured its picking point and displaced it far enough
from rest.  Everything is seeded and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from strawpick.kinematics import (
    Action,
    EndPose,
    JointState,
    ScaraParams,
    clamp_to_limits,
    forward_kinematics,
    inverse_kinematics,
    LimitViolation,
)
from strawpick.sim.camera import CameraModel, default_cameras
from strawpick.sim.render import render_camera
from strawpick.sim.scene import Scene, copy_scene, make_scene

OUTCOMES = ("ongoing", "success", "wrong_target", "multi_pick", "timeout")


class TerminalEnv(RuntimeError):
    """Raised when stepping an episode that already terminated."""


class NotTerminal(RuntimeError):
    """Raised when asking for the outcome of an unfinished episode."""


@dataclass(frozen=True)
class EnvConfig:
    relax: float = 0.9             # per-step relaxation toward rest
    capture_radius: float = 0.008  # m, picking point to gripper midpoint
    detach_dist: float = 0.015     # m displacement from rest to detach
    grip_close: float = 0.25       # aperture below which the gripper grasps
    stem_slack: float = 0.05       # m, max displacement while attached
    body_radius: float = 0.008     # m, gripper contact sphere
    joint_rate: float = 0.08       # rad per step for revolute joints
    prismatic_rate: float = 0.008  # m per step
    grip_rate: float = 0.25        # aperture change per step
    max_steps: int = 150
    detach_grace: int = 10         # steps to hold/retreat after a detach
    fps: int = 30
    image_size: int = 96
    cameras: tuple[str, ...] = ("wrist_up", "wrist_down")


@dataclass
class Observation:
    images: dict[str, np.ndarray]  # label -> (H, W, 3) float32 in [0, 1]
    q: JointState
    grip: float
    t: int


@dataclass
class StepInfo:
    detached_ids: list[int]
    contacts: list[tuple[str, int]]
    terminal: bool
    outcome: str


class PickEnv:
    """One tabletop picking episode; single-threaded, fully deterministic."""

    def __init__(self, params: ScaraParams | None = None,
                 config: EnvConfig | None = None,
                 state_table: dict | None = None):
        self.params = params or ScaraParams()
        self.config = config or EnvConfig()
        self.state_table = state_table
        self.cameras: dict[str, CameraModel] = {
            label: cam
            for label, cam in default_cameras(self.config.image_size).items()
            if label in self.config.cameras
        }
        self.scene: Scene | None = None
        self.q = JointState(0.0, 0.0, 0.0, 0.0)
        self.grip = 1.0
        self.t = 0
        self.terminal = False
        self.detached_order: list[int] = []
        self._held: dict[int, np.ndarray] = {}
        self._detach_step: int | None = None

    # ---------------------------------------------------------------- reset

    def reset(self, state_id: int, seed: int) -> Observation:
        """Seeded reset: fresh scene, arm at a random home pose facing the
        target within a small approach cone, gripper open."""
        self.scene = make_scene(state_id, seed, self.state_table)
        rng = np.random.default_rng([state_id, seed, 1])
        target = self.scene.target
        pick = target.picking_point(at_rest=True)

        u = pick[:2] / np.linalg.norm(pick[:2])
        phi = rng.uniform(-0.25, 0.25)
        c, s = math.cos(phi), math.sin(phi)
        approach = np.array([c * u[0] - s * u[1], s * u[0] + c * u[1]])
        dist = rng.uniform(0.10, 0.16)
        home_xy = pick[:2] - approach * dist
        home_z = pick[2] + rng.uniform(-0.005, 0.02)
        heading = pick[:2] - home_xy
        yaw = math.atan2(heading[1], heading[0])
        pose = EndPose(x=home_xy[0], y=home_xy[1], z=home_z, yaw=yaw)
        try:
            q = inverse_kinematics(pose, self.params, elbow="down")
        except LimitViolation:
            q = inverse_kinematics(pose, self.params, elbow="up")
        self.q = clamp_to_limits(q, self.params)
        self.grip = 1.0
        self.t = 0
        self.terminal = False
        self.detached_order = []
        self._held = {}
        self._detach_step = None
        return self.observe()

    # ----------------------------------------------------------------- step

    def step(self, action: Action) -> tuple[Observation, StepInfo]:
        if self.terminal:
            raise TerminalEnv("episode already terminated")
        assert self.scene is not None, "reset() must be called first"
        cfg = self.config

        target = clamp_to_limits(action.joints(), self.params)
        self.q = JointState(
            theta1=_toward(self.q.theta1, target.theta1, cfg.joint_rate),
            theta2=_toward(self.q.theta2, target.theta2, cfg.joint_rate),
            d3=_toward(self.q.d3, target.d3, cfg.prismatic_rate),
            theta4=_toward(self.q.theta4, target.theta4, cfg.joint_rate),
        )
        self.grip = _toward(self.grip, float(np.clip(action.grip, 0.0, 1.0)),
                            cfg.grip_rate)

        gpos = forward_kinematics(self.q, self.params).xyz
        detached_now: list[int] = []
        contacts: list[tuple[str, int]] = []

        # Grasp capture: a closed gripper latches every berry whose picking
        # point sits inside the capture radius.
        if self.grip < cfg.grip_close:
            for berry in self.scene.berries:
                if berry.id in self._held:
                    continue
                if np.linalg.norm(berry.picking_point() - gpos) < cfg.capture_radius:
                    self._held[berry.id] = berry.cur_pos - gpos
        else:
            self._held = {}

        for bid, offset in self._held.items():
            berry = self.scene.berries[bid]
            berry.cur_pos = gpos + offset
            if berry.attached:
                disp = np.linalg.norm(berry.cur_pos - berry.rest_pos)
                if disp >= cfg.detach_dist:
                    berry.attached = False
                    self.detached_order.append(bid)
                    detached_now.append(bid)
                    if self._detach_step is None:
                        self._detach_step = self.t + 1

        # Contact push-out and relaxation for everything not grasped.
        for berry in self.scene.berries:
            if berry.id in self._held:
                continue
            touched = False
            delta = berry.cur_pos - gpos
            min_d = cfg.body_radius + berry.radius
            d = np.linalg.norm(delta)
            if d < min_d:
                direction = delta / d if d > 1e-9 else np.array([0.0, 1.0, 0.0])
                berry.cur_pos = gpos + direction * min_d
                touched = True
                contacts.append(("gripper", berry.id))
            if berry.attached:
                disp = berry.cur_pos - berry.rest_pos
                norm = np.linalg.norm(disp)
                if norm > cfg.stem_slack:
                    berry.cur_pos = berry.rest_pos + disp * (cfg.stem_slack / norm)
                if not touched:
                    berry.cur_pos = berry.rest_pos + cfg.relax * (
                        berry.cur_pos - berry.rest_pos)

        for i, leaf in enumerate(self.scene.leaves):
            touched = False
            delta = leaf.cur_center - gpos
            min_d = cfg.body_radius + max(leaf.axes)
            d = np.linalg.norm(delta)
            if leaf.pushable and d < min_d:
                direction = delta / d if d > 1e-9 else np.array([0.0, 1.0, 0.0])
                leaf.cur_center = gpos + direction * min_d
                touched = True
                contacts.append(("gripper", -(i + 1)))
            if not touched:
                leaf.cur_center = leaf.rest_center + cfg.relax * (
                    leaf.cur_center - leaf.rest_center)

        self.t += 1
        if len(self.detached_order) >= 2:
            self.terminal = True
        elif self._detach_step is not None and \
                self.t >= self._detach_step + cfg.detach_grace:
            self.terminal = True
        elif self.t >= cfg.max_steps:
            self.terminal = True

        outcome = self._outcome() if self.terminal else "ongoing"
        info = StepInfo(detached_ids=detached_now, contacts=contacts,
                        terminal=self.terminal, outcome=outcome)
        return self.observe(), info

    # ------------------------------------------------------------ queries

    def observe(self) -> Observation:
        assert self.scene is not None
        pose = forward_kinematics(self.q, self.params)
        images = {
            label: render_camera(self.scene, pose, cam, self.grip)
            .astype(np.float32) / 255.0
            for label, cam in self.cameras.items()
        }
        return Observation(images=images, q=self.q, grip=self.grip, t=self.t)

    def ee_pose(self) -> EndPose:
        return forward_kinematics(self.q, self.params)

    def _outcome(self) -> str:
        assert self.scene is not None
        detached = self.detached_order
        if len(detached) >= 2:
            return "multi_pick"
        if len(detached) == 1:
            bid = detached[0]
            if bid == self.scene.target_id:
                # A dropped target counts as a trajectory error, not success.
                return "success" if bid in self._held else "timeout"
            return "wrong_target"
        return "timeout"


def episode_outcome(env: PickEnv) -> str:
    """Final outcome of a terminated episode."""
    if not env.terminal:
        raise NotTerminal("episode still ongoing")
    return env._outcome()


def _toward(current: float, target: float, rate: float) -> float:
    delta = target - current
    if abs(delta) <= rate:
        return target
    return current + math.copysign(rate, delta)
