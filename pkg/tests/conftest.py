import numpy as np
import pytest

from strawpick import dataset as ds
from strawpick import expert
from strawpick.kinematics import ScaraParams
from strawpick.policy import PolicyConfig
from strawpick.sim.env import EnvConfig, PickEnv

# Small rendering keeps the suite fast; geometry/physics are unchanged.
SMALL_ENV = EnvConfig(image_size=32)


def small_policy_config(**overrides) -> PolicyConfig:
    base = dict(variant="epact_ee", cameras=("wrist_up", "wrist_down"),
                chunk_size=8, latent_dim=8, width=32, enc_layers=1,
                dec_layers=1, heads=2, backbone_blocks=3,
                backbone_channels=8, ik_hidden=32, image_size=32,
                beta=10.0, gamma=1.0, lr=1e-3, train_steps=30,
                batch_size=4, seed=0)
    base.update(overrides)
    return PolicyConfig(**base)


@pytest.fixture(scope="session")
def params() -> ScaraParams:
    return ScaraParams()


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory) -> str:
    """Six expert episodes (states 1-3) rendered at 32 px."""
    root = str(tmp_path_factory.mktemp("demos"))
    expert.collect_demos(6, [1, 2, 3], seed=5, out=root,
                         env_config=SMALL_ENV)
    return root


@pytest.fixture()
def demo_record(tiny_dataset) -> ds.EpisodeRecord:
    return ds.read_episode(tiny_dataset, ds.list_episodes(tiny_dataset)[0])


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_dataset, tmp_path_factory):
    """A briefly trained checkpoint over the tiny dataset (not accurate,
    just structurally valid)."""
    from strawpick.policy import train
    out = str(tmp_path_factory.mktemp("ckpt"))
    return train(small_policy_config(train_steps=10, chunk_size=6),
                 tiny_dataset, out, n_val=0)
