import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strawpick.kinematics import (
    Action,
    EndPose,
    JointState,
    LimitViolation,
    ScaraParams,
    Unreachable,
    clamp_to_limits,
    end_pose_array,
    end_pose_sequence,
    forward_kinematics,
    inverse_kinematics,
    wrap_angle,
)

PARAMS = ScaraParams()


def sample_joint(rng: np.random.Generator, params: ScaraParams) -> JointState:
    return JointState(
        theta1=rng.uniform(*params.theta1_range),
        theta2=rng.uniform(*params.theta2_range),
        d3=rng.uniform(*params.d3_range),
        theta4=rng.uniform(*params.theta4_range),
    )


class TestForwardKinematics:
    def test_zero_pose(self):
        pose = forward_kinematics(JointState(0, 0, 0, 0), PARAMS)
        assert pose.as_array() == pytest.approx([0.55, 0, 0, 0, 0, 0])

    def test_right_angle(self):
        q = JointState(math.pi / 2, -math.pi / 2, 0.10, math.pi / 4)
        pose = forward_kinematics(q, PARAMS)
        assert pose.as_array() == pytest.approx(
            [0.25, 0.30, 0.10, 0, 0, math.pi / 4])

    def test_folded_arm_wraps_yaw(self):
        pose = forward_kinematics(JointState(math.pi, math.pi, 0, -math.pi / 2),
                                  PARAMS)
        assert pose.x == pytest.approx(-0.05)
        assert pose.y == pytest.approx(0.0, abs=1e-15)
        assert pose.yaw == pytest.approx(-math.pi / 2)

    @given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-1, 1),
           st.floats(-10, 10))
    def test_planarity(self, t1, t2, d3, t4):
        pose = forward_kinematics(JointState(t1, t2, d3, t4), PARAMS)
        assert pose.roll == 0.0 and pose.pitch == 0.0

    @given(st.floats(-6, 6), st.floats(-6, 6), st.floats(-6, 6))
    def test_yaw_additivity(self, t1, t2, t4):
        pose = forward_kinematics(JointState(t1, t2, 0.0, t4), PARAMS)
        assert pose.yaw == wrap_angle(t1 + t2 + t4)

    def test_z_decoupling(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            q = sample_joint(rng, PARAMS)
            base = forward_kinematics(q, PARAMS)
            moved = forward_kinematics(
                JointState(q.theta1, q.theta2, q.d3 + 0.05, q.theta4), PARAMS)
            assert moved.z == pytest.approx(base.z + 0.05)
            assert (moved.x, moved.y, moved.yaw) == (base.x, base.y, base.yaw)


class TestInverseKinematics:
    def test_full_extension(self):
        q = inverse_kinematics(EndPose(0.55, 0, 0, yaw=0), PARAMS)
        assert q.as_array() == pytest.approx([0, 0, 0, 0], abs=1e-9)

    def test_elbow_down_branch(self):
        # Expected joints frozen from the FK-roundtrip oracle.
        q = inverse_kinematics(EndPose(0.30, 0.25, 0, yaw=0), PARAMS,
                               elbow="down")
        assert q.theta2 == pytest.approx(-math.pi / 2)
        assert q.theta1 == pytest.approx(1.3895, abs=1e-4)
        assert q.theta4 == pytest.approx(wrap_angle(-q.theta1 - q.theta2))
        back = forward_kinematics(q, PARAMS)
        assert back.as_array()[:3] == pytest.approx([0.30, 0.25, 0], abs=1e-12)

    def test_unreachable(self):
        with pytest.raises(Unreachable):
            inverse_kinematics(EndPose(1.0, 0, 0, yaw=0), PARAMS)
        with pytest.raises(Unreachable):
            inverse_kinematics(EndPose(0.01, 0, 0, yaw=0), PARAMS)
        with pytest.raises(Unreachable):
            inverse_kinematics(EndPose(0.4, 0, 0.9, yaw=0), PARAMS)

    def test_limit_violation(self):
        tight = ScaraParams(theta1_range=(-0.1, 0.1))
        with pytest.raises(LimitViolation):
            inverse_kinematics(EndPose(0.0, 0.45, 0, yaw=0), tight,
                               elbow="down")

    def test_roundtrip_sampled(self):
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(2000):
            q = sample_joint(rng, PARAMS)
            pose = forward_kinematics(q, PARAMS)
            elbow = "up" if q.theta2 >= 0 else "down"
            try:
                q2 = inverse_kinematics(pose, PARAMS, elbow=elbow)
            except LimitViolation:
                continue
            pose2 = forward_kinematics(q2, PARAMS)
            worst = max(worst, np.max(np.abs(pose2.as_array()
                                             - pose.as_array())))
        assert worst < 1e-9


class TestClamp:
    def test_identity_within_limits(self):
        q = JointState(0.5, -0.5, 0.2, 1.0)
        assert clamp_to_limits(q, PARAMS) == q

    def test_clipping(self):
        q = clamp_to_limits(JointState(10.0, 0, 0, 0), PARAMS)
        assert q.theta1 == 2.2

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            q = JointState(*rng.uniform(-5, 5, size=4))
            once = clamp_to_limits(q, PARAMS)
            assert clamp_to_limits(once, PARAMS) == once


class TestEndPoseSequence:
    def test_empty(self):
        assert end_pose_sequence([], PARAMS) == []

    def test_single_zero(self):
        [pose] = end_pose_sequence([[0, 0, 0, 0]], PARAMS)
        assert pose.as_array() == pytest.approx([0.55, 0, 0, 0, 0, 0])

    def test_matches_scalar_fk(self):
        rng = np.random.default_rng(7)
        seq = [sample_joint(rng, PARAMS).as_array() for _ in range(50)]
        poses = end_pose_sequence(seq, PARAMS)
        for q, pose in zip(seq, poses):
            expected = forward_kinematics(JointState.from_array(q), PARAMS)
            assert pose.as_array() == pytest.approx(expected.as_array())

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(8)
        seq = np.stack([sample_joint(rng, PARAMS).as_array()
                        for _ in range(64)])
        vec = end_pose_array(seq, PARAMS)
        for row, pose in zip(vec, end_pose_sequence(seq, PARAMS)):
            assert row == pytest.approx(pose.as_array())


class TestTypes:
    def test_action_grip_bounds(self):
        with pytest.raises(ValueError):
            Action(0, 0, 0, 0, 1.5)
        with pytest.raises(ValueError):
            Action(float("nan"), 0, 0, 0, 0.5)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            ScaraParams(L1=-1.0)
        with pytest.raises(ValueError):
            ScaraParams(d3_range=(0.4, 0.0))
        with pytest.raises(ValueError):
            ScaraParams(theta4_range=(-4.0, 4.0))

    def test_wrap_range(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
        assert wrap_angle(0.0) == 0.0
