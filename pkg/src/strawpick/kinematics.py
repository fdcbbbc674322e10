"""Exact forward/inverse kinematics for the 4-DoF SCARA arm.

Joint layout: two planar revolute joints (theta1, theta2), one vertical
prismatic joint (d3), one wrist yaw (theta4).  The end-effector pose is the
6-D vector {x, y, z, roll, pitch, yaw}; for this arm roll and pitch are
identically zero and yaw = wrap(theta1 + theta2 + theta4).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

Elbow = Literal["up", "down"]


class KinematicsError(Exception):
    """Base class for kinematics failures."""


class Unreachable(KinematicsError):
    """Target pose lies outside the reachable annulus or prismatic stroke."""


class LimitViolation(KinematicsError):
    """An IK solution exists but violates the joint limits."""


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return math.pi - (math.pi - angle) % (2.0 * math.pi)


@dataclass(frozen=True)
class ScaraParams:
    """Geometry and joint limits of the arm.

    Lengths in meters, angles in radians.  The defaults cover a 0.55 m
    tabletop workspace.
    """

    L1: float = 0.30
    L2: float = 0.25
    d3_range: tuple[float, float] = (0.0, 0.40)
    theta1_range: tuple[float, float] = (-2.2, 2.2)
    theta2_range: tuple[float, float] = (-2.6, 2.6)
    theta4_range: tuple[float, float] = (-math.pi, math.pi)
    gripper_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self) -> None:
        if self.L1 <= 0 or self.L2 <= 0:
            raise ValueError("link lengths must be positive")
        for name in ("d3_range", "theta1_range", "theta2_range",
                     "theta4_range", "gripper_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must satisfy lo < hi, got {(lo, hi)}")
        lo, hi = self.theta4_range
        if lo < -math.pi or hi > math.pi:
            raise ValueError("theta4_range must lie within [-pi, pi]")

    @property
    def reach_min(self) -> float:
        return abs(self.L1 - self.L2)

    @property
    def reach_max(self) -> float:
        return self.L1 + self.L2


@dataclass(frozen=True)
class JointState:
    """Arm joint vector q = (theta1, theta2, d3, theta4)."""

    theta1: float
    theta2: float
    d3: float
    theta4: float

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.d3, self.theta4])

    @classmethod
    def from_array(cls, q: Sequence[float]) -> "JointState":
        t1, t2, d3, t4 = (float(v) for v in q)
        return cls(t1, t2, d3, t4)


@dataclass(frozen=True)
class Action:
    """Joint targets plus normalized gripper aperture, a in R^5."""

    theta1: float
    theta2: float
    d3: float
    theta4: float
    grip: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.grip <= 1.0:
            raise ValueError(f"grip must lie in [0, 1], got {self.grip}")
        for v in (self.theta1, self.theta2, self.d3, self.theta4):
            if not math.isfinite(v):
                raise ValueError("joint targets must be finite")

    def joints(self) -> JointState:
        return JointState(self.theta1, self.theta2, self.d3, self.theta4)

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.d3, self.theta4, self.grip])

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "Action":
        t1, t2, d3, t4, g = (float(v) for v in a)
        return cls(t1, t2, d3, t4, g)


@dataclass(frozen=True)
class EndPose:
    """6-D end-effector pose; roll = pitch = 0 for this arm."""

    x: float
    y: float
    z: float
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.roll, self.pitch, self.yaw])

    @property
    def xyz(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def forward_kinematics(q: JointState, params: ScaraParams) -> EndPose:
    """Closed-form FK; total over all finite joint vectors."""
    c12 = math.cos(q.theta1 + q.theta2)
    s12 = math.sin(q.theta1 + q.theta2)
    x = params.L1 * math.cos(q.theta1) + params.L2 * c12
    y = params.L1 * math.sin(q.theta1) + params.L2 * s12
    return EndPose(x=x, y=y, z=q.d3,
                   yaw=wrap_angle(q.theta1 + q.theta2 + q.theta4))


def inverse_kinematics(pose: EndPose, params: ScaraParams,
                       elbow: Elbow = "down") -> JointState:
    """Analytic IK for a planar target (x, y, z, yaw).

    ``elbow`` selects the sign of theta2: "up" gives theta2 >= 0, "down"
    theta2 <= 0.  Raises :class:`Unreachable` outside the reach annulus or
    prismatic stroke, :class:`LimitViolation` if the unique solution of the
    selected branch exceeds a joint range.
    """
    if elbow not in ("up", "down"):
        raise ValueError(f"elbow must be 'up' or 'down', got {elbow!r}")
    r2 = pose.x * pose.x + pose.y * pose.y
    cos_t2 = (r2 - params.L1 ** 2 - params.L2 ** 2) / (2.0 * params.L1 * params.L2)
    # Tolerate roundoff at the annulus boundary only.
    if abs(cos_t2) > 1.0 + 1e-9:
        raise Unreachable(
            f"target radius {math.sqrt(r2):.4f} m outside "
            f"[{params.reach_min:.4f}, {params.reach_max:.4f}] m")
    cos_t2 = max(-1.0, min(1.0, cos_t2))
    lo, hi = params.d3_range
    if not lo - 1e-12 <= pose.z <= hi + 1e-12:
        raise Unreachable(f"z = {pose.z:.4f} m outside stroke [{lo}, {hi}] m")

    theta2 = math.acos(cos_t2)
    if elbow == "down":
        theta2 = -theta2
    theta1 = math.atan2(pose.y, pose.x) - math.atan2(
        params.L2 * math.sin(theta2), params.L1 + params.L2 * math.cos(theta2))
    theta4 = wrap_angle(pose.yaw - theta1 - theta2)
    q = JointState(theta1, theta2, float(pose.z), theta4)

    for value, (vlo, vhi), name in (
        (q.theta1, params.theta1_range, "theta1"),
        (q.theta2, params.theta2_range, "theta2"),
        (q.theta4, params.theta4_range, "theta4"),
    ):
        if not vlo - 1e-12 <= value <= vhi + 1e-12:
            raise LimitViolation(f"{name} = {value:.4f} outside [{vlo}, {vhi}]")
    return q


def clamp_to_limits(q: JointState, params: ScaraParams) -> JointState:
    """Clip each joint to its range; idempotent."""
    def clip(v: float, rng: tuple[float, float]) -> float:
        return min(max(v, rng[0]), rng[1])

    return JointState(
        theta1=clip(q.theta1, params.theta1_range),
        theta2=clip(q.theta2, params.theta2_range),
        d3=clip(q.d3, params.d3_range),
        theta4=clip(q.theta4, params.theta4_range),
    )


def end_pose_sequence(q_seq: Iterable[Sequence[float]],
                      params: ScaraParams) -> list[EndPose]:
    """FK applied per step to a sequence of 4-D joint vectors."""
    return [forward_kinematics(JointState.from_array(q), params) for q in q_seq]


def end_pose_array(q_seq: np.ndarray, params: ScaraParams) -> np.ndarray:
    """Vectorized FK: (..., 4) joint array -> (..., 6) pose array."""
    q = np.asarray(q_seq, dtype=np.float64)
    t1, t2, d3, t4 = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.zeros(q.shape[:-1] + (6,), dtype=np.float64)
    out[..., 0] = params.L1 * np.cos(t1) + params.L2 * np.cos(t1 + t2)
    out[..., 1] = params.L1 * np.sin(t1) + params.L2 * np.sin(t1 + t2)
    out[..., 2] = d3
    out[..., 5] = np.pi - (np.pi - (t1 + t2 + t4)) % (2.0 * np.pi)
    return out
