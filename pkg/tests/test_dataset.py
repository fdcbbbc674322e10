import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strawpick import dataset as ds
from strawpick.kinematics import ScaraParams, end_pose_array

PARAMS = ScaraParams()


def synthetic_record(T: int = 12, seed: int = 0,
                     cameras=("wrist_up", "wrist_down")) -> ds.EpisodeRecord:
    rng = np.random.default_rng(seed)
    return ds.EpisodeRecord(
        state_id=2, seed=seed, source="expert", outcome="success", fps=30,
        cameras=tuple(cameras),
        images={c: rng.integers(0, 256, size=(T, 8, 8, 3), dtype=np.uint8)
                for c in cameras},
        q=rng.normal(size=(T, 4)).astype(np.float32),
        grip=rng.uniform(size=(T, 1)).astype(np.float32),
        actions=np.concatenate(
            [rng.normal(size=(T, 4)), rng.uniform(size=(T, 1))],
            axis=1).astype(np.float32))


class TestRecordValidation:
    def test_too_short(self):
        with pytest.raises(ds.SchemaViolation):
            synthetic_record(T=1)

    def test_nonfinite_action(self):
        rec = synthetic_record()
        bad = rec.actions.copy()
        bad[3, 2] = np.nan
        with pytest.raises(ds.SchemaViolation):
            ds.EpisodeRecord(state_id=rec.state_id, seed=rec.seed,
                             source=rec.source, outcome=rec.outcome,
                             fps=rec.fps, cameras=rec.cameras,
                             images=rec.images, q=rec.q, grip=rec.grip,
                             actions=bad)

    def test_camera_label_mismatch(self):
        rec = synthetic_record()
        with pytest.raises(ds.SchemaViolation):
            ds.EpisodeRecord(state_id=0, seed=0, source="expert",
                             outcome="success", fps=30,
                             cameras=("wrist_up",), images=rec.images,
                             q=rec.q, grip=rec.grip, actions=rec.actions)


class TestStorage:
    def test_roundtrip(self, tmp_path):
        rec = synthetic_record(T=9, seed=3)
        eid = ds.write_episode(rec, str(tmp_path))
        back = ds.read_episode(str(tmp_path), eid)
        assert back.equals(rec)

    def test_mmap_roundtrip(self, tmp_path):
        rec = synthetic_record(T=9, seed=3)
        eid = ds.write_episode(rec, str(tmp_path))
        back = ds.read_episode(str(tmp_path), eid, mmap=True)
        assert back.equals(rec)

    def test_monotone_ids(self, tmp_path):
        root = str(tmp_path)
        ids = [ds.write_episode(synthetic_record(seed=i), root)
               for i in range(4)]
        assert ids == ["ep_000000", "ep_000001", "ep_000002", "ep_000003"]
        assert ds.list_episodes(root) == ids

    def test_ids_monotone_after_deletion(self, tmp_path):
        import shutil
        root = str(tmp_path)
        for i in range(3):
            ds.write_episode(synthetic_record(seed=i), root)
        shutil.rmtree(os.path.join(root, "ep_000001"))
        assert ds.write_episode(synthetic_record(seed=9), root) == "ep_000003"

    def test_truncated_bin_detected(self, tmp_path):
        root = str(tmp_path)
        eid = ds.write_episode(synthetic_record(), root)
        path = os.path.join(root, eid, "q.bin")
        with open(path, "r+b") as fh:
            fh.truncate(os.path.getsize(path) - 4)
        with pytest.raises(ds.SchemaViolation):
            ds.read_episode(root, eid)

    def test_corrupt_sidecar_detected(self, tmp_path):
        root = str(tmp_path)
        eid = ds.write_episode(synthetic_record(), root)
        with open(os.path.join(root, eid, "actions.json"), "w") as fh:
            fh.write("{not json")
        with pytest.raises(ds.SchemaViolation):
            ds.read_episode(root, eid)

    def test_sidecar_declares_layout(self, tmp_path):
        root = str(tmp_path)
        eid = ds.write_episode(synthetic_record(T=7), root)
        with open(os.path.join(root, eid, "actions.json")) as fh:
            side = json.load(fh)
        assert side == {"shape": [7, 5], "dtype": "float32",
                        "byte_order": "little"}

    def test_list_missing_root_empty(self, tmp_path):
        assert ds.list_episodes(str(tmp_path / "nope")) == []


class TestNormStats:
    def test_gripper_channel_identity(self, tiny_dataset):
        stats = ds.compute_norm_stats(tiny_dataset)
        assert stats.action_mean[4] == 0.0 and stats.action_std[4] == 1.0

    def test_std_floor_on_constant_channel(self, tmp_path):
        rec = synthetic_record(T=8)
        const = rec.actions.copy()
        const[:, 1] = 0.37
        rec2 = ds.EpisodeRecord(state_id=0, seed=0, source="expert",
                                outcome="success", fps=30,
                                cameras=rec.cameras, images=rec.images,
                                q=rec.q, grip=rec.grip, actions=const)
        ds.write_episode(rec2, str(tmp_path))
        stats = ds.compute_norm_stats(str(tmp_path))
        assert stats.action_std[1] == ds.STD_FLOOR
        x = np.full(5, 0.37)
        y = ds.denormalize(ds.normalize(x, stats.action_mean,
                                        stats.action_std),
                           stats.action_mean, stats.action_std)
        assert y == pytest.approx(x)

    def test_permutation_invariance(self, tmp_path):
        root_a, root_b = str(tmp_path / "a"), str(tmp_path / "b")
        recs = [synthetic_record(T=6 + i, seed=i) for i in range(4)]
        for r in recs:
            ds.write_episode(r, root_a)
        for r in reversed(recs):
            ds.write_episode(r, root_b)
        sa = ds.compute_norm_stats(root_a)
        sb = ds.compute_norm_stats(root_b)
        for key in ("q_mean", "q_std", "action_mean", "action_std",
                    "end_pose_mean", "end_pose_std"):
            assert getattr(sa, key) == pytest.approx(getattr(sb, key))

    def test_dict_roundtrip(self, tiny_dataset):
        stats = ds.compute_norm_stats(tiny_dataset)
        back = ds.NormStats.from_dict(json.loads(json.dumps(stats.to_dict())))
        assert back.q_mean == pytest.approx(stats.q_mean)
        assert back.end_pose_std == pytest.approx(stats.end_pose_std)

    def test_empty_split(self, tmp_path):
        with pytest.raises(ds.EmptySplit):
            ds.compute_norm_stats(str(tmp_path))

    @given(st.floats(-5, 5), st.floats(0.1, 3), st.floats(-2, 2))
    def test_affine_roundtrip(self, mean, std, x):
        m, s = np.array([mean]), np.array([std])
        assert ds.denormalize(ds.normalize(np.array([x]), m, s), m, s)[0] \
            == pytest.approx(x, abs=1e-12)


class TestSampleChunk:
    def setup_method(self):
        self.rec = synthetic_record(T=10, seed=4)
        self.stats = ds.NormStats(
            q_mean=np.zeros(4), q_std=np.ones(4),
            action_mean=np.zeros(5), action_std=np.ones(5),
            end_pose_mean=np.zeros(6), end_pose_std=np.ones(6))

    def test_interior_chunk_no_padding(self):
        s = ds.sample_chunk(self.rec, 2, 5, self.rec.cameras, self.stats)
        assert not s.pad_mask.any()
        assert s.action_chunk == pytest.approx(
            self.rec.actions[2:7].astype(np.float64))

    def test_tail_padding_by_repetition(self):
        s = ds.sample_chunk(self.rec, 8, 6, self.rec.cameras, self.stats)
        assert list(s.pad_mask) == [False, False, True, True, True, True]
        for j in range(2, 6):
            assert s.action_chunk[j] == pytest.approx(s.action_chunk[1])

    def test_pad_mask_monotone(self):
        for t in range(10):
            s = ds.sample_chunk(self.rec, t, 7, self.rec.cameras, self.stats)
            m = s.pad_mask.astype(int)
            assert np.all(np.diff(m) >= 0)

    def test_end_poses_are_fk_of_actions(self):
        s = ds.sample_chunk(self.rec, 0, 4, self.rec.cameras, self.stats)
        expected = end_pose_array(
            self.rec.actions[0:4, :4].astype(np.float64), PARAMS)
        assert s.end_pose_chunk == pytest.approx(expected)

    def test_images_scaled_to_unit(self):
        s = ds.sample_chunk(self.rec, 3, 2, self.rec.cameras, self.stats)
        for label in self.rec.cameras:
            img = s.images[label]
            assert img.dtype == np.float32
            assert img.min() >= 0.0 and img.max() <= 1.0
            assert img == pytest.approx(
                self.rec.images[label][3].astype(np.float32) / 255.0)

    def test_normalization_applied(self):
        stats = ds.NormStats(
            q_mean=np.full(4, 1.0), q_std=np.full(4, 2.0),
            action_mean=np.zeros(5), action_std=np.full(5, 4.0),
            end_pose_mean=np.zeros(6), end_pose_std=np.ones(6))
        s = ds.sample_chunk(self.rec, 1, 3, self.rec.cameras, stats)
        assert s.q == pytest.approx((self.rec.q[1] - 1.0) / 2.0)
        assert s.action_chunk == pytest.approx(
            self.rec.actions[1:4].astype(np.float64) / 4.0)

    def test_bad_index(self):
        with pytest.raises(ds.BadIndex):
            ds.sample_chunk(self.rec, 10, 3, self.rec.cameras, self.stats)
        with pytest.raises(ds.BadIndex):
            ds.sample_chunk(self.rec, -1, 3, self.rec.cameras, self.stats)

    def test_unknown_camera(self):
        with pytest.raises(ds.SchemaViolation):
            ds.sample_chunk(self.rec, 0, 3, ("side",), self.stats)


class TestSplit:
    def test_partition_and_determinism(self, tmp_path):
        root = str(tmp_path)
        for i in range(8):
            ds.write_episode(synthetic_record(seed=i), root)
        tr1, va1 = ds.split_train_val(root, 3, seed=7)
        tr2, va2 = ds.split_train_val(root, 3, seed=7)
        assert (tr1, va1) == (tr2, va2)
        assert len(va1) == 3 and not set(tr1) & set(va1)
        assert sorted(tr1 + va1) == ds.list_episodes(root)

    def test_seed_changes_split(self, tmp_path):
        root = str(tmp_path)
        for i in range(10):
            ds.write_episode(synthetic_record(seed=i), root)
        splits = {tuple(ds.split_train_val(root, 4, seed=s)[1])
                  for s in range(6)}
        assert len(splits) > 1

    def test_too_few_episodes(self, tmp_path):
        root = str(tmp_path)
        ds.write_episode(synthetic_record(), root)
        with pytest.raises(ds.TooFewEpisodes):
            ds.split_train_val(root, 1, seed=0)
