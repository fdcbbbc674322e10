"""Simulated clustered strawberry picking with a 4-DoF SCARA arm.

Subpackages cover the full pipeline: exact SCARA kinematics, a deterministic
tabletop scene simulator with wrist cameras, a scripted demonstrator, episodic
dataset storage, CVAE-transformer chunked-action policies with an end-pose
auxiliary head, closed-loop inference with temporal ensembling, and an
evaluation harness producing per-scenario success-rate tables.
"""

from strawpick.kinematics import (
    Action,
    EndPose,
    JointState,
    ScaraParams,
    clamp_to_limits,
    end_pose_sequence,
    forward_kinematics,
    inverse_kinematics,
)

__all__ = [
    "Action",
    "EndPose",
    "JointState",
    "ScaraParams",
    "clamp_to_limits",
    "end_pose_sequence",
    "forward_kinematics",
    "inverse_kinematics",
]

__version__ = "0.1.0"
