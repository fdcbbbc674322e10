"""Scripted demonstrator: plans an approach around (or through) occluders,
grasps the picking point, pulls to detach, and retreats.

The expert reads the ground-truth scene (privileged information, like a human
demonstrator watching the real plants); the learned policy only ever sees
rendered observations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from strawpick.kinematics import (
    Action,
    EndPose,
    JointState,
    LimitViolation,
    ScaraParams,
    Unreachable,
    clamp_to_limits,
    inverse_kinematics,
)
from strawpick.sim.env import PickEnv
from strawpick.sim.scene import Scene
from strawpick import dataset as ds

STRATEGIES = ("direct", "detour_left", "detour_right", "push_through")

APPROACH_DIST = 0.10     # m from pre-approach point to the picking point
DETOUR_OFFSET = 0.045    # m lateral shift of the detour waypoint
PUSH_CLEARANCE = 0.01    # both sides tighter than this -> push through
WAYPOINT_SIGMA = 0.005   # m jitter on transit waypoints
GRASP_SIGMA = 0.0015     # m jitter on the grasp waypoint (capture radius 8 mm)


class Unplannable(RuntimeError):
    """Target picking point is not IK-reachable."""


class ExhaustedRetries(RuntimeError):
    """Too many failed expert attempts while collecting demonstrations."""


@dataclass
class DemoPlan:
    waypoints: list[tuple[EndPose, float]]  # (pose, grip target)
    strategy: str
    noise_seed: int


def _segment_clearance(p0: np.ndarray, p1: np.ndarray,
                       center: np.ndarray, radius: float) -> float:
    """Clearance from an obstacle to the segment [p0, p1], measured in the
    xy plane: a hanging berry plus its stem blocks the approach as a
    vertical column, whatever its exact hang height."""
    d = p1[:2] - p0[:2]
    L2 = float(d @ d)
    c = center[:2]
    s = 0.0 if L2 == 0.0 else float(np.clip((c - p0[:2]) @ d / L2, 0.0, 1.0))
    return float(np.linalg.norm(c - (p0[:2] + s * d))) - radius


def _path_clearance(waypts: list[np.ndarray], scene: Scene) -> float:
    obstacles = [(b.rest_pos, b.radius) for b in scene.occluders()]
    obstacles += [(l.rest_center, max(l.axes)) for l in scene.leaves]
    if not obstacles:
        return math.inf
    worst = math.inf
    for p0, p1 in zip(waypts[:-1], waypts[1:]):
        for center, radius in obstacles:
            worst = min(worst, _segment_clearance(p0, p1, center, radius))
    return worst


def plan_demo(scene: Scene, params: ScaraParams, noise_seed: int) -> DemoPlan:
    """Plan a grasp-and-pull demonstration for the scene's target berry.

    Strategy: direct if the straight approach clears every occluder by more
    than a berry radius; otherwise detour to the side with the larger
    clearance; push through only if both sides are tighter than 1 cm.
    Transit waypoints get seeded Gaussian jitter for demo diversity; the
    grasp waypoint gets a much smaller jitter so the grasp stays inside the
    capture radius.
    """
    rng = np.random.default_rng(noise_seed)
    target = scene.target
    pick = target.picking_point(at_rest=True)

    r = float(np.linalg.norm(pick[:2]))
    if not params.reach_min <= r <= params.reach_max:
        raise Unplannable(f"picking point radius {r:.3f} m out of reach")
    lo, hi = params.d3_range
    if not lo <= pick[2] <= hi:
        raise Unplannable(f"picking point z {pick[2]:.3f} m out of stroke")

    u2 = pick[:2] / r
    u = np.array([u2[0], u2[1], 0.0])
    left = np.array([-u[1], u[0], 0.0])
    pre = pick - u * APPROACH_DIST
    mid = pick - u * (APPROACH_DIST / 2.0)

    direct_clear = _path_clearance([pre, pick], scene)
    if direct_clear > target.radius:
        strategy = "direct"
        transit = [pre]
    else:
        clear_left = _path_clearance([pre, mid + left * DETOUR_OFFSET, pick], scene)
        clear_right = _path_clearance([pre, mid - left * DETOUR_OFFSET, pick], scene)
        if max(clear_left, clear_right) < PUSH_CLEARANCE:
            strategy = "push_through"
            transit = [pre]
        elif clear_left >= clear_right:
            strategy = "detour_left"
            transit = [pre, mid + left * DETOUR_OFFSET]
        else:
            strategy = "detour_right"
            transit = [pre, mid - left * DETOUR_OFFSET]

    yaw = math.atan2(u[1], u[0])

    def pose(p: np.ndarray, sigma: float) -> EndPose:
        p = p + rng.normal(0.0, sigma, size=3)
        return EndPose(x=float(p[0]), y=float(p[1]), z=float(p[2]), yaw=yaw)

    grasp = pose(pick, GRASP_SIGMA)
    pull = pick - u * 0.03 + np.array([0.0, 0.0, 0.03])
    retreat = pick - u * 0.09 + np.array([0.0, 0.0, 0.05])

    waypoints = [(pose(p, WAYPOINT_SIGMA), 1.0) for p in transit]
    waypoints += [
        (grasp, 1.0),
        (grasp, 0.0),                     # dwell and close
        (pose(pull, WAYPOINT_SIGMA), 0.0),
        (pose(retreat, WAYPOINT_SIGMA), 0.0),
    ]
    # Every waypoint must be reachable, otherwise the plan is unusable.
    for wp, _ in waypoints:
        _solve_ik(wp, params)
    return DemoPlan(waypoints=waypoints, strategy=strategy, noise_seed=noise_seed)


def _solve_ik(pose: EndPose, params: ScaraParams) -> JointState:
    try:
        return inverse_kinematics(pose, params, elbow="down")
    except LimitViolation:
        return inverse_kinematics(pose, params, elbow="up")


def _min_jerk(q0: np.ndarray, q1: np.ndarray, n: int) -> np.ndarray:
    """Minimum-jerk interpolation from q0 to q1 over n steps (end inclusive)."""
    tau = np.arange(1, n + 1) / n
    s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
    return q0 + s[:, None] * (q1 - q0)


def execute_plan(env: PickEnv, plan: DemoPlan) -> ds.EpisodeRecord:
    """Run the plan closed over the env at 30 Hz and record every step.

    Waypoints are converted to joint space and time-parameterized with
    minimum-jerk segments whose duration scales with Cartesian distance
    (0.5 s per 10 cm) and respects the env's per-step joint rate limit.
    """
    assert env.scene is not None, "env must be reset to the plan's scene"
    params = env.params
    fps = env.config.fps

    q_prev = env.q.as_array()
    grip_prev = env.grip
    obs = env.observe()

    images: dict[str, list[np.ndarray]] = {label: [] for label in env.cameras}
    qs: list[np.ndarray] = []
    grips: list[float] = []
    actions: list[np.ndarray] = []
    terminal = False

    # Peak minimum-jerk joint speed is 1.875 * delta / T; keep it under the
    # env's per-step rate limit so commanded targets are actually tracked.
    rev_rate = env.config.joint_rate * fps
    pris_rate = env.config.prismatic_rate * fps

    for wp, grip_target in plan.waypoints:
        q_next = _solve_ik(wp, params)
        q_next = clamp_to_limits(q_next, params).as_array()
        cart = float(np.linalg.norm(wp.xyz - _fk_xyz(q_prev, params)))
        duration = max(0.3, cart / 0.10 * 0.5)
        for dq, rate in zip(np.abs(q_next - q_prev)[[0, 1, 3]], 3 * [rev_rate]):
            duration = max(duration, 1.95 * dq / rate)
        duration = max(duration, 1.95 * abs(q_next[2] - q_prev[2]) / pris_rate)
        n = max(2, int(round(duration * fps)))
        for q_cmd in _min_jerk(q_prev, q_next, n):
            action = Action.from_array(np.append(q_cmd, grip_target))
            for label in images:
                images[label].append(
                    (obs.images[label] * 255.0).round().astype(np.uint8))
            qs.append(obs.q.as_array())
            grips.append(obs.grip)
            actions.append(action.as_array())
            obs, info = env.step(action)
            if info.terminal:
                terminal = True
                break
        q_prev = q_next
        grip_prev = grip_target
        if terminal:
            break

    outcome = env._outcome() if env.terminal else "timeout"
    return ds.EpisodeRecord(
        state_id=env.scene.state_id,
        seed=env.scene.seed,
        source="expert",
        outcome=outcome,
        fps=fps,
        cameras=tuple(images.keys()),
        images={label: np.stack(v) for label, v in images.items()},
        q=np.stack(qs).astype(np.float32),
        grip=np.array(grips, dtype=np.float32)[:, None],
        actions=np.stack(actions).astype(np.float32),
    )


def _fk_xyz(q: np.ndarray, params: ScaraParams) -> np.ndarray:
    from strawpick.kinematics import forward_kinematics
    return forward_kinematics(JointState.from_array(q), params).xyz


def collect_demos(n: int, states: list[int], seed: int, out: str,
                  params: ScaraParams | None = None,
                  env_config=None) -> dict:
    """Write n successful demonstrations round-robin over the given states.

    Failed expert attempts are retried with fresh derived seeds; more than
    10x n attempts raises :class:`ExhaustedRetries`.  Returns a summary with
    per-state counts and the retry total.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    params = params or ScaraParams()
    env = PickEnv(params=params, config=env_config)

    counts = {s: 0 for s in states}
    attempts = 0
    retries = 0
    episode_ids = []
    for i in range(n):
        state = states[i % len(states)]
        while True:
            attempts += 1
            if attempts > 10 * n:
                raise ExhaustedRetries(
                    f"{attempts} attempts for {i} stored episodes")
            attempt_seed = seed * 1_000_003 + attempts
            env.reset(state, attempt_seed)
            try:
                plan = plan_demo(env.scene, params, noise_seed=attempt_seed + 1)
                record = execute_plan(env, plan)
            except (Unplannable, Unreachable, LimitViolation):
                retries += 1
                continue
            if record.outcome == "success":
                episode_ids.append(ds.write_episode(record, out))
                counts[state] += 1
                break
            retries += 1
    return {"episodes": n, "per_state": counts, "retries": retries,
            "episode_ids": episode_ids, "out": out}


def success_rate(states: list[int], trials: int, seed: int,
                 params: ScaraParams | None = None,
                 env_config=None) -> float:
    """Fraction of seeded expert runs that end in success (solvability probe)."""
    params = params or ScaraParams()
    env = PickEnv(params=params, config=env_config)
    wins = 0
    total = 0
    for state in states:
        for i in range(trials):
            env.reset(state, seed + 7919 * i)
            plan = plan_demo(env.scene, params, noise_seed=seed + 31 * i + state)
            record = execute_plan(env, plan)
            wins += record.outcome == "success"
            total += 1
    return wins / total
