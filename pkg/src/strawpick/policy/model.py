"""CVAE-transformer chunked-action policy with three selectable heads.

Variants:
  act      — linear head from decoder hidden states to 5-D actions.
  epact_l  — predicts a 6-D end pose per step, then fuses [pose, hidden]
             through a small perceptron into the 5-D action.
  epact_ee — decodes the predicted end pose into the 4 arm joints with a
             learned inverse-kinematics perceptron; a parallel linear branch
             on the hidden state alone produces the gripper channel.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import torch
import torch.nn as nn

VARIANTS = ("act", "epact_l", "epact_ee")


class UnknownVariant(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    variant: str = "epact_ee"
    cameras: tuple[str, ...] = ("wrist_up", "wrist_down")
    chunk_size: int = 50
    latent_dim: int = 32
    width: int = 128
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 4
    backbone_blocks: int = 4
    backbone_channels: int = 16
    ik_hidden: int = 128
    image_size: int = 96
    beta: float = 10.0
    gamma: float = 1.0
    lr: float = 1e-4
    lr_schedule: str = "constant"    # or "cosine" (anneal to zero)
    train_steps: int = 20000
    batch_size: int = 16
    seed: int = 0
    ep_stop_grad: bool = False       # cut action-loss gradient into the pose
    epact_l_fusion: str = "concat"   # or "add"
    end_pose_source: str = "actions"  # FK targets from actions or states

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise UnknownVariant(f"variant must be one of {VARIANTS}")
        if not self.cameras:
            raise ValueError("at least one camera is required")
        if self.chunk_size < 1 or self.latent_dim < 1:
            raise ValueError("chunk_size and latent_dim must be >= 1")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be >= 0")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError("lr_schedule must be 'constant' or 'cosine'")
        if self.image_size // (2 ** self.backbone_blocks) < 1:
            raise ValueError("too many backbone blocks for the image size")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["cameras"] = list(self.cameras)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyConfig":
        d = dict(d)
        d["cameras"] = tuple(d["cameras"])
        return cls(**d)

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> "PolicyConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class PredictionBundle:
    action_chunk_hat: torch.Tensor            # (B, k, 5)
    end_pose_chunk_hat: torch.Tensor | None   # (B, k, 6); None for act
    hidden_states: torch.Tensor               # (B, k, width)


@dataclass
class LossBreakdown:
    rec_action: torch.Tensor
    reg: torch.Tensor
    rec_end_pose: torch.Tensor
    total: torch.Tensor

    def detach_floats(self) -> dict[str, float]:
        return {k: float(getattr(self, k).detach())
                for k in ("rec_action", "reg", "rec_end_pose", "total")}


class ConvBackbone(nn.Module):
    """Small strided conv stack producing a token grid."""

    def __init__(self, blocks: int, base_channels: int, width: int):
        super().__init__()
        layers = []
        c_in = 3
        c = base_channels
        for _ in range(blocks):
            layers += [nn.Conv2d(c_in, c, 3, stride=2, padding=1),
                       nn.GroupNorm(min(4, c), c),
                       nn.ReLU(inplace=True)]
            c_in, c = c, min(c * 2, 128)
        self.body = nn.Sequential(*layers)
        self.proj = nn.Conv2d(c_in, width, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feat = self.proj(self.body(x))            # (B, width, H', W')
        return feat.flatten(2).transpose(1, 2)    # (B, H'*W', width)


def _encoder(cfg: PolicyConfig) -> nn.TransformerEncoder:
    layer = nn.TransformerEncoderLayer(
        d_model=cfg.width, nhead=cfg.heads, dim_feedforward=4 * cfg.width,
        dropout=0.0, batch_first=True)
    return nn.TransformerEncoder(layer, cfg.enc_layers)


class ChunkPolicy(nn.Module):
    def __init__(self, config: PolicyConfig):
        super().__init__()
        self.config = config
        cfg = config
        grid = cfg.image_size // (2 ** cfg.backbone_blocks)
        n_img_tokens = grid * grid

        self.backbones = nn.ModuleDict({
            cam: ConvBackbone(cfg.backbone_blocks, cfg.backbone_channels,
                              cfg.width)
            for cam in cfg.cameras})
        self.img_pos = nn.ParameterDict({
            cam: nn.Parameter(torch.zeros(n_img_tokens, cfg.width))
            for cam in cfg.cameras})
        self.q_proj = nn.Linear(4, cfg.width)
        self.z_proj = nn.Linear(cfg.latent_dim, cfg.width)
        self.extra_pos = nn.Parameter(torch.zeros(2, cfg.width))

        self.encoder = _encoder(cfg)
        self.query_embed = nn.Parameter(torch.zeros(cfg.chunk_size, cfg.width))
        dec_layer = nn.TransformerDecoderLayer(
            d_model=cfg.width, nhead=cfg.heads, dim_feedforward=4 * cfg.width,
            dropout=0.0, batch_first=True)
        self.decoder = nn.TransformerDecoder(dec_layer, cfg.dec_layers)

        # CVAE encoder over [cls, q, action sequence].
        self.cvae_action_proj = nn.Linear(5, cfg.width)
        self.cvae_q_proj = nn.Linear(4, cfg.width)
        self.cls_embed = nn.Parameter(torch.zeros(1, cfg.width))
        self.cvae_pos = nn.Parameter(torch.zeros(cfg.chunk_size + 2, cfg.width))
        self.cvae_encoder = _encoder(cfg)
        self.latent_head = nn.Linear(cfg.width, 2 * cfg.latent_dim)

        if cfg.variant == "act":
            self.action_head = nn.Linear(cfg.width, 5)
        elif cfg.variant == "epact_l":
            self.pose_head = nn.Linear(cfg.width, 6)
            fuse_in = 6 + cfg.width if cfg.epact_l_fusion == "concat" else cfg.width
            self.pose_fuse = (nn.Linear(6, cfg.width)
                              if cfg.epact_l_fusion == "add" else None)
            self.action_head = nn.Sequential(
                nn.Linear(fuse_in, cfg.width), nn.ReLU(inplace=True),
                nn.Linear(cfg.width, 5))
        else:  # epact_ee
            self.pose_head = nn.Linear(cfg.width, 6)
            self.neural_ik = nn.Sequential(
                nn.Linear(6, cfg.ik_hidden), nn.ReLU(inplace=True),
                nn.Linear(cfg.ik_hidden, cfg.ik_hidden), nn.ReLU(inplace=True),
                nn.Linear(cfg.ik_hidden, 4))
            self.gripper_head = nn.Linear(cfg.width, 1)

        self._init_embeddings()

    def _init_embeddings(self) -> None:
        for p in [self.query_embed, self.cls_embed, self.extra_pos,
                  self.cvae_pos, *self.img_pos.values()]:
            nn.init.normal_(p, std=0.02)

    # ------------------------------------------------------------- encoder

    def encode_cvae(self, action_chunk: torch.Tensor, q: torch.Tensor
                    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Posterior parameters (mu, logvar) from the demonstrated chunk."""
        B, k, dim = action_chunk.shape
        if k != self.config.chunk_size or dim != 5:
            raise ShapeMismatch(
                f"expected (B, {self.config.chunk_size}, 5) actions, got "
                f"{tuple(action_chunk.shape)}")
        tokens = torch.cat([
            self.cls_embed.expand(B, 1, -1),
            self.cvae_q_proj(q).unsqueeze(1),
            self.cvae_action_proj(action_chunk),
        ], dim=1) + self.cvae_pos
        cls_out = self.cvae_encoder(tokens)[:, 0]
        mu, logvar = self.latent_head(cls_out).chunk(2, dim=-1)
        return mu, logvar

    @staticmethod
    def sample_latent(mu: torch.Tensor, logvar: torch.Tensor,
                      generator: torch.Generator | None = None) -> torch.Tensor:
        eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype,
                          device=mu.device)
        return mu + torch.exp(0.5 * logvar) * eps

    # ------------------------------------------------------------- decoder

    def predict_chunk(self, images: dict[str, torch.Tensor],
                      q: torch.Tensor, z: torch.Tensor) -> PredictionBundle:
        """Predict the action chunk for one observation batch.

        ``images`` maps camera label to (B, 3, H, W) tensors in [0, 1];
        ``z`` is the latent code (zeros at inference).
        """
        cfg = self.config
        if set(images) != set(cfg.cameras):
            raise ShapeMismatch(
                f"observation cameras {sorted(images)} do not match config "
                f"{sorted(cfg.cameras)}")
        B = q.shape[0]
        tokens = []
        for cam in cfg.cameras:
            tokens.append(self.backbones[cam](images[cam]) + self.img_pos[cam])
        tokens.append(self.q_proj(q).unsqueeze(1) + self.extra_pos[0])
        tokens.append(self.z_proj(z).unsqueeze(1) + self.extra_pos[1])
        memory = self.encoder(torch.cat(tokens, dim=1))

        queries = self.query_embed.unsqueeze(0).expand(B, -1, -1)
        hidden = self.decoder(queries, memory)    # (B, k, width)

        if cfg.variant == "act":
            return PredictionBundle(self.action_head(hidden), None, hidden)

        pose_hat = self.pose_head(hidden)         # (B, k, 6)
        pose_in = pose_hat.detach() if cfg.ep_stop_grad else pose_hat
        if cfg.variant == "epact_l":
            if cfg.epact_l_fusion == "concat":
                fused = torch.cat([pose_in, hidden], dim=-1)
            else:
                fused = self.pose_fuse(pose_in) + hidden
            actions = self.action_head(fused)
        else:  # epact_ee: joints from the pose alone, gripper from hidden
            joints = self.neural_ik(pose_in)
            grip = self.gripper_head(hidden)
            actions = torch.cat([joints, grip], dim=-1)
        return PredictionBundle(actions, pose_hat, hidden)

    def forward(self, images, q, action_chunk=None,
                generator: torch.Generator | None = None):
        """Training forward: posterior z; inference (no chunk): z = 0."""
        if action_chunk is None:
            z = torch.zeros(q.shape[0], self.config.latent_dim,
                            dtype=q.dtype, device=q.device)
            mu = logvar = torch.zeros_like(z)
        else:
            mu, logvar = self.encode_cvae(action_chunk, q)
            z = self.sample_latent(mu, logvar, generator)
        pred = self.predict_chunk(images, q, z)
        return pred, mu, logvar


# ------------------------------------------------------------------ losses

def kl_divergence(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """Standard Gaussian KL, summed over the latent dim, batch-averaged."""
    kl = -0.5 * (1.0 + logvar - mu.pow(2) - logvar.exp()).sum(dim=-1)
    return kl.mean()


def _masked_l1(pred: torch.Tensor, target: torch.Tensor,
               pad_mask: torch.Tensor) -> torch.Tensor:
    if pred.shape != target.shape:
        raise ShapeMismatch(f"{tuple(pred.shape)} vs {tuple(target.shape)}")
    valid = (~pad_mask).to(pred.dtype).unsqueeze(-1)    # (B, k, 1)
    err = (pred - target).abs() * valid
    return err.sum() / (valid.sum() * pred.shape[-1])


def compute_loss(pred: PredictionBundle, target_actions: torch.Tensor,
                 target_end_poses: torch.Tensor, pad_mask: torch.Tensor,
                 mu: torch.Tensor, logvar: torch.Tensor,
                 config: PolicyConfig) -> LossBreakdown:
    """L1 reconstruction over non-padded steps, KL regularizer, and the
    end-pose L1 term, combined as rec + beta * reg + gamma * rec_end_pose."""
    rec_action = _masked_l1(pred.action_chunk_hat, target_actions, pad_mask)
    reg = kl_divergence(mu, logvar)
    if pred.end_pose_chunk_hat is None:
        rec_end_pose = torch.zeros((), dtype=rec_action.dtype,
                                   device=rec_action.device)
    else:
        rec_end_pose = _masked_l1(pred.end_pose_chunk_hat, target_end_poses,
                                  pad_mask)
    total = rec_action + config.beta * reg + config.gamma * rec_end_pose
    return LossBreakdown(rec_action, reg, rec_end_pose, total)


def count_parameters(config: PolicyConfig) -> int:
    """Exact trainable-parameter count for a config."""
    model = ChunkPolicy(config)
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
