"""Closed-loop inference: chunk prediction per step, temporal ensembling,
and predicted-trajectory overlays in image space.

Ensembling fuses the step-t predictions of every retained chunk with weights
w_j = exp(-m * j), where j = 0 is the oldest retained chunk.  A chunk is
retained while it still covers the upcoming step.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import cv2
import numpy as np
import torch

from strawpick import dataset as ds
from strawpick.kinematics import (
    Action,
    EndPose,
    JointState,
    clamp_to_limits,
    end_pose_array,
)
from strawpick.policy.train import Checkpoint
from strawpick.sim.camera import BEHIND, CameraModel, project_point
from strawpick.sim.env import Observation, PickEnv


class EmptyBuffer(RuntimeError):
    """Defensive: the ensemble buffer never empties after an insert."""


@dataclass
class EnsembleBuffer:
    m: float = 0.01
    capacity: int | None = None           # defaults to the chunk length
    entries: list[tuple[int, np.ndarray]] = field(default_factory=list)

    def clear(self) -> None:
        self.entries = []


def ensemble_step(buffer: EnsembleBuffer, new_chunk: np.ndarray,
                  t: int) -> np.ndarray:
    """Insert the fresh chunk, emit the weighted action for step t, and
    evict chunks that no longer cover step t+1."""
    new_chunk = np.asarray(new_chunk, dtype=np.float64)
    k = new_chunk.shape[0]
    if buffer.capacity is None:
        buffer.capacity = k
    if not t >= 0:
        raise ValueError("t must be non-negative")
    buffer.entries.append((t, new_chunk))
    if len(buffer.entries) > buffer.capacity:
        buffer.entries = buffer.entries[-buffer.capacity:]

    preds, weights = [], []
    for j, (birth, chunk) in enumerate(buffer.entries):
        idx = t - birth
        if 0 <= idx < chunk.shape[0]:
            preds.append(chunk[idx])
            weights.append(math.exp(-buffer.m * j))
    if not preds:
        raise EmptyBuffer("no retained chunk covers the current step")
    w = np.asarray(weights)
    action = (np.stack(preds) * w[:, None]).sum(axis=0) / w.sum()

    buffer.entries = [(birth, chunk) for birth, chunk in buffer.entries
                      if t + 1 - birth < chunk.shape[0]]
    return action


@dataclass
class RolloutLog:
    actions: np.ndarray                    # (T, 5) emitted actions
    q: np.ndarray                          # (T, 4) measured joints
    grip: np.ndarray                       # (T, 1)
    pred_end_poses: list[np.ndarray]       # per step, (k, 6) denormalized
    latencies_ms: list[float]
    outcome: str
    state_id: int
    seed: int
    images: dict[str, np.ndarray] | None = None   # (T, H, W, 3) uint8

    def save(self, root: str, cameras: tuple[str, ...]) -> str:
        """Serialize as an EpisodeRecord plus a JSON sidecar."""
        if self.images is None:
            raise ValueError("rollout was run without keep_images")
        record = ds.EpisodeRecord(
            state_id=self.state_id, seed=self.seed, source="policy",
            outcome=self.outcome, fps=30, cameras=cameras,
            images=self.images, q=self.q.astype(np.float32),
            grip=self.grip.astype(np.float32),
            actions=self.actions.astype(np.float32))
        eid = ds.write_episode(record, root)
        sidecar = {"outcome": self.outcome,
                   "mean_latency_ms": float(np.mean(self.latencies_ms)),
                   "latencies_ms": self.latencies_ms}
        with open(os.path.join(root, eid, "rollout.json"), "w") as fh:
            json.dump(sidecar, fh, indent=1)
        return eid


def _obs_tensors(obs: Observation, checkpoint: Checkpoint):
    cfg = checkpoint.config
    stats = checkpoint.stats
    images = {cam: torch.from_numpy(obs.images[cam]).permute(2, 0, 1)[None]
              for cam in cfg.cameras}
    qn = ds.normalize(obs.q.as_array(), stats.q_mean, stats.q_std)
    return images, torch.from_numpy(qn).float()[None]


def predict_chunk_np(checkpoint: Checkpoint, obs: Observation,
                     params=None) -> tuple[np.ndarray, np.ndarray]:
    """One z = 0 forward pass; returns denormalized (k, 5) actions and
    (k, 6) end poses (FK of the predicted joints for the act variant)."""
    images, q = _obs_tensors(obs, checkpoint)
    stats = checkpoint.stats
    with torch.no_grad():
        pred, _, _ = checkpoint.model(images, q)
    chunk = ds.denormalize(pred.action_chunk_hat[0].double().numpy(),
                           stats.action_mean, stats.action_std)
    if pred.end_pose_chunk_hat is not None:
        poses = ds.denormalize(pred.end_pose_chunk_hat[0].double().numpy(),
                               stats.end_pose_mean, stats.end_pose_std)
    else:
        from strawpick.kinematics import ScaraParams
        poses = end_pose_array(chunk[:, :4], params or ScaraParams())
    return chunk, poses


def run_episode(env: PickEnv, checkpoint: Checkpoint, seed: int,
                state_id: int | None = None, use_ensemble: bool = True,
                m: float = 0.01, keep_images: bool = False) -> RolloutLog:
    """Roll the policy closed-loop until a terminal outcome or the step cap.

    The checkpoint's camera subset must be available in the env.  Every
    emitted action is clamped to the joint limits.
    """
    cfg = checkpoint.config
    missing = set(cfg.cameras) - set(env.cameras)
    if missing:
        raise ValueError(f"env lacks cameras required by the policy: {missing}")
    if state_id is not None:
        obs = env.reset(state_id, seed)
    else:
        obs = env.observe()
    sid = env.scene.state_id

    buffer = EnsembleBuffer(m=m)
    actions, qs, grips, pose_chunks, latencies = [], [], [], [], []
    images: dict[str, list[np.ndarray]] = {c: [] for c in cfg.cameras}
    outcome = "timeout"
    step = 0
    while True:
        start = time.perf_counter()
        try:
            chunk, poses = predict_chunk_np(checkpoint, obs, env.params)
        except Exception as exc:
            raise RuntimeError(f"policy failure at step {step}") from exc
        if use_ensemble:
            a = ensemble_step(buffer, chunk, step)
        else:
            a = chunk[0]
        latencies.append(1000.0 * (time.perf_counter() - start))

        joints = clamp_to_limits(JointState.from_array(a[:4]), env.params)
        action = Action(joints.theta1, joints.theta2, joints.d3, joints.theta4,
                        float(np.clip(a[4], 0.0, 1.0)))
        if keep_images:
            for c in cfg.cameras:
                images[c].append(
                    (obs.images[c] * 255.0).round().astype(np.uint8))
        actions.append(action.as_array())
        qs.append(obs.q.as_array())
        grips.append(obs.grip)
        pose_chunks.append(poses)

        try:
            obs, info = env.step(action)
        except Exception as exc:
            raise RuntimeError(f"env failure at step {step}") from exc
        step += 1
        if info.terminal:
            outcome = info.outcome
            break

    return RolloutLog(
        actions=np.stack(actions), q=np.stack(qs),
        grip=np.array(grips)[:, None], pred_end_poses=pose_chunks,
        latencies_ms=latencies, outcome=outcome, state_id=sid, seed=seed,
        images={c: np.stack(v) for c, v in images.items()}
        if keep_images else None)


# ----------------------------------------------------------------- overlay

def overlay_trajectory(image: np.ndarray, end_pose_chunk: np.ndarray,
                       cam: CameraModel, ee_pose: EndPose) -> np.ndarray:
    """Draw the predicted end-pose positions as a polyline, color-graded from
    yellow (now) to magenta (chunk horizon); points behind the camera are
    skipped.  Returns an annotated uint8 copy."""
    out = np.ascontiguousarray(
        (image * 255.0).round().astype(np.uint8) if image.dtype != np.uint8
        else image.copy())
    chunk = np.asarray(end_pose_chunk)
    n = chunk.shape[0]
    if n == 0:
        return out
    prev = None
    for i in range(n):
        uv = project_point(cam, ee_pose, chunk[i, :3])
        if uv is BEHIND:
            prev = None
            continue
        pt = (int(round(uv[0])), int(round(uv[1])))
        frac = i / max(1, n - 1)
        color = (255, int(round(255 * (1 - frac))), int(round(255 * frac)))
        if prev is not None:
            cv2.line(out, prev, pt, color, 1, lineType=cv2.LINE_8)
        else:
            cv2.circle(out, pt, 1, color, -1, lineType=cv2.LINE_8)
        prev = pt
    return out
