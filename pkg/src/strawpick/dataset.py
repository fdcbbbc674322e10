"""Episodic demonstration storage, normalization stats, and chunk sampling.

On-disk layout: one directory per episode under the dataset root, holding
``meta.json`` plus one raw little-endian binary per array with a JSON sidecar
declaring shape and element type.  Float arrays are 32-bit, images 8-bit
unsigned RGB.  The store is append-only; episode ids are monotonically
increasing.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from strawpick.kinematics import ScaraParams, end_pose_array

FORMAT_VERSION = 1
STD_FLOOR = 1e-6

_DTYPES = {"float32": "<f4", "uint8": "u1"}


class SchemaViolation(ValueError):
    """Episode files are malformed or internally inconsistent."""


class EmptySplit(ValueError):
    """No episodes available in the requested split."""


class BadIndex(IndexError):
    """Chunk start index outside the episode."""


class TooFewEpisodes(ValueError):
    """Dataset smaller than the requested validation count."""


@dataclass
class EpisodeRecord:
    """One full demonstration: metadata plus per-step arrays of length T."""

    state_id: int
    seed: int
    source: str                        # "expert" | "teleop"
    outcome: str
    fps: int
    cameras: tuple[str, ...]
    images: dict[str, np.ndarray]      # label -> (T, H, W, 3) uint8
    q: np.ndarray                      # (T, 4) float32
    grip: np.ndarray                   # (T, 1) float32
    actions: np.ndarray                # (T, 5) float32

    def __post_init__(self) -> None:
        self.validate()

    @property
    def length(self) -> int:
        return self.q.shape[0]

    @property
    def image_hw(self) -> tuple[int, int]:
        any_img = next(iter(self.images.values()))
        return (any_img.shape[1], any_img.shape[2])

    def validate(self) -> None:
        T = self.q.shape[0]
        if T < 2:
            raise SchemaViolation(f"episode length {T} < 2")
        if self.q.shape != (T, 4) or self.grip.shape != (T, 1) \
                or self.actions.shape != (T, 5):
            raise SchemaViolation("state/action array shapes inconsistent")
        if not np.all(np.isfinite(self.actions)):
            raise SchemaViolation("actions contain non-finite values")
        if set(self.cameras) != set(self.images):
            raise SchemaViolation("camera labels do not match image arrays")
        for label, arr in self.images.items():
            if arr.ndim != 4 or arr.shape[0] != T or arr.shape[3] != 3:
                raise SchemaViolation(f"image array {label} has shape {arr.shape}")

    def equals(self, other: "EpisodeRecord") -> bool:
        return (
            (self.state_id, self.seed, self.source, self.outcome, self.fps,
             tuple(self.cameras))
            == (other.state_id, other.seed, other.source, other.outcome,
                other.fps, tuple(other.cameras))
            and np.array_equal(self.q, other.q)
            and np.array_equal(self.grip, other.grip)
            and np.array_equal(self.actions, other.actions)
            and all(np.array_equal(self.images[k], other.images[k])
                    for k in self.images)
        )


# ------------------------------------------------------------------- I/O

def _write_array(dirpath: str, name: str, arr: np.ndarray, dtype: str) -> None:
    data = np.ascontiguousarray(arr.astype(_DTYPES[dtype], copy=False))
    with open(os.path.join(dirpath, f"{name}.bin"), "wb") as fh:
        fh.write(data.tobytes())
    sidecar = {"shape": list(arr.shape), "dtype": dtype, "byte_order": "little"}
    with open(os.path.join(dirpath, f"{name}.json"), "w") as fh:
        json.dump(sidecar, fh, sort_keys=True)


def _read_array(dirpath: str, name: str, mmap: bool = False) -> np.ndarray:
    sidecar_path = os.path.join(dirpath, f"{name}.json")
    bin_path = os.path.join(dirpath, f"{name}.bin")
    try:
        with open(sidecar_path) as fh:
            sidecar = json.load(fh)
        shape = tuple(sidecar["shape"])
        np_dtype = np.dtype(_DTYPES[sidecar["dtype"]])
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise SchemaViolation(f"bad sidecar for {name}: {exc}") from exc
    expected = int(np.prod(shape)) * np_dtype.itemsize
    actual = os.path.getsize(bin_path)
    if actual != expected:
        raise SchemaViolation(
            f"{name}.bin has {actual} bytes, sidecar declares {expected}")
    if mmap:
        return np.memmap(bin_path, dtype=np_dtype, mode="r", shape=shape)
    with open(bin_path, "rb") as fh:
        return np.frombuffer(fh.read(), dtype=np_dtype).reshape(shape)


def list_episodes(root: str) -> list[str]:
    if not os.path.isdir(root):
        return []
    return sorted(d for d in os.listdir(root)
                  if d.startswith("ep_") and
                  os.path.isdir(os.path.join(root, d)))


def write_episode(record: EpisodeRecord, root: str) -> str:
    """Atomically write an episode; returns its id (monotone increasing)."""
    record.validate()
    os.makedirs(root, exist_ok=True)
    existing = list_episodes(root)
    next_idx = 1 + max((int(e.split("_")[1]) for e in existing), default=-1)
    episode_id = f"ep_{next_idx:06d}"

    tmp = tempfile.mkdtemp(dir=root, prefix=".tmp_")
    try:
        meta = {
            "format_version": FORMAT_VERSION,
            "state_id": record.state_id,
            "seed": record.seed,
            "source": record.source,
            "outcome": record.outcome,
            "fps": record.fps,
            "cameras": list(record.cameras),
            "image_hw": list(record.image_hw),
            "length": record.length,
        }
        with open(os.path.join(tmp, "meta.json"), "w") as fh:
            json.dump(meta, fh, sort_keys=True, indent=1)
        _write_array(tmp, "q", record.q, "float32")
        _write_array(tmp, "grip", record.grip, "float32")
        _write_array(tmp, "actions", record.actions, "float32")
        for label, arr in record.images.items():
            _write_array(tmp, f"img_{label}", arr, "uint8")
        os.rename(tmp, os.path.join(root, episode_id))
    except BaseException:
        for f in os.listdir(tmp):
            os.unlink(os.path.join(tmp, f))
        os.rmdir(tmp)
        raise
    return episode_id


def read_episode(root: str, episode_id: str, mmap: bool = False) -> EpisodeRecord:
    dirpath = os.path.join(root, episode_id)
    try:
        with open(os.path.join(dirpath, "meta.json")) as fh:
            meta = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaViolation(f"bad meta.json in {episode_id}: {exc}") from exc
    cameras = tuple(meta["cameras"])
    return EpisodeRecord(
        state_id=meta["state_id"],
        seed=meta["seed"],
        source=meta["source"],
        outcome=meta["outcome"],
        fps=meta["fps"],
        cameras=cameras,
        images={label: _read_array(dirpath, f"img_{label}", mmap=mmap)
                for label in cameras},
        q=_read_array(dirpath, "q", mmap=mmap),
        grip=_read_array(dirpath, "grip", mmap=mmap),
        actions=_read_array(dirpath, "actions", mmap=mmap),
    )


# ----------------------------------------------------------- normalization

@dataclass
class NormStats:
    """Mean/std over a split for q (4), actions (5), end poses (6).

    The gripper action channel keeps its [0, 1] semantics: its mean is 0 and
    std 1 so the affine map is the identity there.  All stds are floored.
    """

    q_mean: np.ndarray
    q_std: np.ndarray
    action_mean: np.ndarray
    action_std: np.ndarray
    end_pose_mean: np.ndarray
    end_pose_std: np.ndarray

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in (
            "q_mean", "q_std", "action_mean", "action_std",
            "end_pose_mean", "end_pose_std")}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(**{k: np.asarray(d[k], dtype=np.float64) for k in (
            "q_mean", "q_std", "action_mean", "action_std",
            "end_pose_mean", "end_pose_std")})


def compute_norm_stats(root: str, split: list[str] | None = None,
                       params: ScaraParams | None = None,
                       end_pose_source: str = "actions") -> NormStats:
    """Stats over all steps of the split; end-pose stats via FK.

    ``end_pose_source`` selects whether ground-truth end poses come from the
    commanded action joint targets (default) or the measured joint states.
    """
    params = params or ScaraParams()
    ids = split if split is not None else list_episodes(root)
    if not ids:
        raise EmptySplit(f"no episodes in split under {root}")
    qs, acts, eps = [], [], []
    for eid in ids:
        rec = read_episode(root, eid, mmap=True)
        qs.append(np.asarray(rec.q, dtype=np.float64))
        acts.append(np.asarray(rec.actions, dtype=np.float64))
        joints = rec.actions[:, :4] if end_pose_source == "actions" else rec.q
        eps.append(end_pose_array(np.asarray(joints, dtype=np.float64), params))
    q_all, a_all, e_all = np.concatenate(qs), np.concatenate(acts), np.concatenate(eps)

    def stats(arr):
        return arr.mean(axis=0), np.maximum(arr.std(axis=0), STD_FLOOR)

    q_mean, q_std = stats(q_all)
    a_mean, a_std = stats(a_all)
    a_mean[4], a_std[4] = 0.0, 1.0  # gripper stays in [0, 1]
    e_mean, e_std = stats(e_all)
    return NormStats(q_mean, q_std, a_mean, a_std, e_mean, e_std)


def normalize(x: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (x - mean) / std


def denormalize(x: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return x * std + mean


# ---------------------------------------------------------------- sampling

@dataclass
class ChunkSample:
    """Training sample: observation at t plus the next k actions/end poses."""

    images: dict[str, np.ndarray]   # label -> (H, W, 3) float32 in [0, 1]
    q: np.ndarray                   # (4,) normalized
    action_chunk: np.ndarray        # (k, 5) normalized
    end_pose_chunk: np.ndarray      # (k, 6) normalized
    pad_mask: np.ndarray            # (k,) bool, True = padded


def sample_chunk(record: EpisodeRecord, t: int, k: int,
                 cameras: tuple[str, ...], stats: NormStats,
                 params: ScaraParams | None = None,
                 end_pose_source: str = "actions") -> ChunkSample:
    """Slice actions[t : t+k] with tail padding by repetition.

    End poses are FK of the raw (unnormalized) action joint targets, then
    normalized by the end-pose stats.
    """
    params = params or ScaraParams()
    T = record.length
    if not 0 <= t < T:
        raise BadIndex(f"t = {t} outside [0, {T})")
    if k < 1:
        raise ValueError("k must be >= 1")
    n_real = min(k, T - t)
    chunk = np.asarray(record.actions[t:t + n_real], dtype=np.float64)
    if n_real < k:
        chunk = np.concatenate(
            [chunk, np.repeat(chunk[-1:], k - n_real, axis=0)])
    pad_mask = np.arange(k) >= n_real

    joints = chunk[:, :4]
    if end_pose_source != "actions":
        qsrc = np.asarray(record.q[t:t + n_real], dtype=np.float64)
        joints = np.concatenate(
            [qsrc, np.repeat(qsrc[-1:], k - n_real, axis=0)])
    end_poses = end_pose_array(joints, params)

    images = {}
    for label in cameras:
        if label not in record.images:
            raise SchemaViolation(f"camera {label} not recorded")
        images[label] = np.asarray(record.images[label][t],
                                   dtype=np.float32) / 255.0
    return ChunkSample(
        images=images,
        q=normalize(np.asarray(record.q[t], dtype=np.float64),
                    stats.q_mean, stats.q_std),
        action_chunk=normalize(chunk, stats.action_mean, stats.action_std),
        end_pose_chunk=normalize(end_poses, stats.end_pose_mean,
                                 stats.end_pose_std),
        pad_mask=pad_mask,
    )


def split_train_val(root: str, n_val: int, seed: int) -> tuple[list[str], list[str]]:
    """Seeded deterministic split; the val ids are fixed for a given seed."""
    ids = list_episodes(root)
    if n_val >= len(ids):
        raise TooFewEpisodes(f"n_val = {n_val} >= dataset size {len(ids)}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    val = sorted(ids[i] for i in perm[:n_val])
    train = sorted(ids[i] for i in perm[n_val:])
    return train, val
