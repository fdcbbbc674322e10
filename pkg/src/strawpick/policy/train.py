"""Training loop, checkpointing, and inference timing for the chunk policy.

A checkpoint is a directory holding ``weights.pt``, ``config.json``,
``norm_stats.json``, and a ``loss_log.csv`` with columns
(step, rec_action, reg, rec_end_pose, total, val_total).
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass

import numpy as np
import torch

from strawpick import dataset as ds
from strawpick.kinematics import ScaraParams
from strawpick.policy.model import ChunkPolicy, PolicyConfig, compute_loss


class NonFiniteLoss(RuntimeError):
    """Training aborted on a NaN/inf loss; message carries the step."""


@dataclass
class Checkpoint:
    model: ChunkPolicy
    config: PolicyConfig
    stats: ds.NormStats
    path: str | None = None


class _EpisodeCache:
    """Episodes loaded once (images memory-mapped) for batch sampling."""

    def __init__(self, root: str, ids: list[str]):
        self.records = [ds.read_episode(root, eid, mmap=True) for eid in ids]
        if not self.records:
            raise ds.EmptySplit(f"no episodes under {root}")

    def sample_batch(self, rng: np.random.Generator, config: PolicyConfig,
                     stats: ds.NormStats, params: ScaraParams,
                     batch_size: int | None = None) -> dict[str, torch.Tensor]:
        B = batch_size or config.batch_size
        samples = []
        for _ in range(B):
            rec = self.records[rng.integers(len(self.records))]
            t = int(rng.integers(rec.length))
            samples.append(ds.sample_chunk(
                rec, t, config.chunk_size, config.cameras, stats,
                params=params, end_pose_source=config.end_pose_source))
        batch = {
            "q": torch.from_numpy(np.stack([s.q for s in samples])).float(),
            "actions": torch.from_numpy(
                np.stack([s.action_chunk for s in samples])).float(),
            "end_poses": torch.from_numpy(
                np.stack([s.end_pose_chunk for s in samples])).float(),
            "pad_mask": torch.from_numpy(
                np.stack([s.pad_mask for s in samples])),
        }
        batch["images"] = {
            cam: torch.from_numpy(np.stack(
                [s.images[cam] for s in samples])).permute(0, 3, 1, 2)
            for cam in config.cameras}
        return batch


def _evaluate(model: ChunkPolicy, cache: _EpisodeCache, config: PolicyConfig,
              stats: ds.NormStats, params: ScaraParams,
              n_batches: int = 4) -> float:
    rng = np.random.default_rng(config.seed + 9999)
    gen = torch.Generator().manual_seed(config.seed + 9999)
    model.eval()
    totals = []
    with torch.no_grad():
        for _ in range(n_batches):
            b = cache.sample_batch(rng, config, stats, params)
            pred, mu, logvar = model(b["images"], b["q"], b["actions"],
                                     generator=gen)
            loss = compute_loss(pred, b["actions"], b["end_poses"],
                                b["pad_mask"], mu, logvar, config)
            totals.append(float(loss.total))
    model.train()
    return float(np.mean(totals))


def train(config: PolicyConfig, dataset_path: str, out_dir: str,
          n_val: int = 6, params: ScaraParams | None = None,
          log_every: int = 50, val_every: int = 500,
          train_ids: list[str] | None = None,
          progress: bool = False) -> Checkpoint:
    """Seeded end-to-end gradient descent on the composite chunk loss.

    Writes the checkpoint directory and returns it loaded.  ``n_val``
    episodes are split off for validation (0 disables validation);
    ``train_ids`` overrides the split, e.g. to restrict training states.
    """
    params = params or ScaraParams()
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    gen = torch.Generator().manual_seed(config.seed + 1)

    if train_ids is None:
        all_ids = ds.list_episodes(dataset_path)
        if n_val > 0:
            train_ids, val_ids = ds.split_train_val(dataset_path, n_val,
                                                    config.seed)
        else:
            train_ids, val_ids = all_ids, []
    else:
        val_ids = []
        if n_val > 0 and len(train_ids) > n_val:
            val_ids, train_ids = train_ids[:n_val], train_ids[n_val:]

    stats = ds.compute_norm_stats(dataset_path, train_ids, params=params,
                                  end_pose_source=config.end_pose_source)
    cache = _EpisodeCache(dataset_path, train_ids)
    val_cache = _EpisodeCache(dataset_path, val_ids) if val_ids else None

    model = ChunkPolicy(config)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    sched = (torch.optim.lr_scheduler.CosineAnnealingLR(
        opt, T_max=config.train_steps)
        if config.lr_schedule == "cosine" else None)

    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, "loss_log.csv")
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "rec_action", "reg", "rec_end_pose",
                         "total", "val_total"])
        val_total = ""
        for step in range(1, config.train_steps + 1):
            batch = cache.sample_batch(rng, config, stats, params)
            pred, mu, logvar = model(batch["images"], batch["q"],
                                     batch["actions"], generator=gen)
            loss = compute_loss(pred, batch["actions"], batch["end_poses"],
                                batch["pad_mask"], mu, logvar, config)
            if not torch.isfinite(loss.total):
                raise NonFiniteLoss(
                    f"non-finite loss at step {step}: {loss.detach_floats()}")
            opt.zero_grad()
            loss.total.backward()
            opt.step()
            if sched is not None:
                sched.step()

            if val_cache is not None and step % val_every == 0:
                val_total = f"{_evaluate(model, val_cache, config, stats, params):.6f}"
            if step % log_every == 0 or step == config.train_steps:
                f = loss.detach_floats()
                writer.writerow([step, f"{f['rec_action']:.6f}",
                                 f"{f['reg']:.6f}", f"{f['rec_end_pose']:.6f}",
                                 f"{f['total']:.6f}", val_total])
                if progress:
                    print(f"step {step}: total {f['total']:.4f} "
                          f"rec {f['rec_action']:.4f}", flush=True)

    model.eval()
    torch.save(model.state_dict(), os.path.join(out_dir, "weights.pt"))
    config.save(os.path.join(out_dir, "config.json"))
    with open(os.path.join(out_dir, "norm_stats.json"), "w") as fh:
        json.dump(stats.to_dict(), fh, indent=1, sort_keys=True)
    return Checkpoint(model=model, config=config, stats=stats, path=out_dir)


def load_checkpoint(path: str) -> Checkpoint:
    config = PolicyConfig.load(os.path.join(path, "config.json"))
    with open(os.path.join(path, "norm_stats.json")) as fh:
        stats = ds.NormStats.from_dict(json.load(fh))
    model = ChunkPolicy(config)
    model.load_state_dict(torch.load(os.path.join(path, "weights.pt"),
                                     weights_only=True))
    model.eval()
    return Checkpoint(model=model, config=config, stats=stats, path=path)


def measure_inference_ms(checkpoint: Checkpoint, n_warm: int = 5,
                         n_meas: int = 20) -> float:
    """Mean wall-clock per single-observation forward pass."""
    cfg = checkpoint.config
    images = {cam: torch.zeros(1, 3, cfg.image_size, cfg.image_size)
              for cam in cfg.cameras}
    q = torch.zeros(1, 4)
    model = checkpoint.model
    model.eval()
    with torch.no_grad():
        for _ in range(n_warm):
            model(images, q)
        start = time.perf_counter()
        for _ in range(n_meas):
            model(images, q)
        elapsed = time.perf_counter() - start
    return 1000.0 * elapsed / n_meas
