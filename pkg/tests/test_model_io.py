import numpy as np
import pytest

from deltasim.dataset import NormStats, WindowConfig
from deltasim.errors import CorruptFile, VersionMismatch
from deltasim.learn import (
    BcPolicy,
    DiffusionConfig,
    DiffusionPolicy,
    IbcConfig,
    IbcPolicy,
    MlpConfig,
    TrainConfig,
    load_model,
    save_model,
)

STATS = NormStats(np.zeros(12), np.full(12, 20.0), np.ones(12), np.full(12, 19.0))
WINDOW = WindowConfig(pred_horizon=4, exec_horizon=2)


def policies():
    yield DiffusionPolicy(
        WINDOW, STATS, DiffusionConfig(steps=10, hidden=(16,), step_embed_dim=8),
        TrainConfig(seed=3), image_hw=(4, 4),
    )
    yield BcPolicy(WINDOW, STATS, MlpConfig(hidden=(16,)), TrainConfig(seed=4), image_hw=(4, 4))
    yield IbcPolicy(
        WINDOW, STATS, IbcConfig(train_negatives=8, infer_samples=64),
        MlpConfig(hidden=(16,)), TrainConfig(seed=5), image_hw=(4, 4),
    )


class TestModelRoundTrip:
    @pytest.mark.parametrize("policy", list(policies()), ids=lambda p: p.algo)
    def test_identical_predictions_after_reload(self, policy, tmp_path):
        path = tmp_path / f"{policy.algo}.tmdl"
        save_model(policy, path)
        back = load_model(path)
        rng = np.random.default_rng(0)
        images = rng.uniform(0, 1, (1, WINDOW.obs_horizon, 4, 4)).astype(np.float32)
        joints = rng.uniform(-1, 1, (1, WINDOW.obs_horizon, 12)).astype(np.float32)
        a = policy.sample(images, joints, np.random.default_rng(9))
        b = back.sample(images, joints, np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(back.stats.joints_max, STATS.joints_max)
        assert back.train_cfg.seed == policy.train_cfg.seed

    def test_parameter_blob_is_64bit_and_exact(self, tmp_path):
        policy = next(policies())
        path = tmp_path / "m.tmdl"
        save_model(policy, path)
        back = load_model(path)
        for p0, p1 in zip(policy.params(), back.params()):
            np.testing.assert_array_equal(p0.value, p1.value)

    def test_save_is_deterministic(self, tmp_path):
        policy = next(policies())
        p1, p2 = tmp_path / "a.tmdl", tmp_path / "b.tmdl"
        save_model(policy, p1)
        save_model(policy, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestModelErrors:
    def test_tampered_magic(self, tmp_path):
        policy = next(policies())
        path = tmp_path / "m.tmdl"
        save_model(policy, path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(CorruptFile):
            load_model(path)

    def test_version_mismatch(self, tmp_path):
        policy = next(policies())
        path = tmp_path / "m.tmdl"
        save_model(policy, path)
        raw = bytearray(path.read_bytes())
        raw[4] = 99
        path.write_bytes(bytes(raw))
        with pytest.raises(VersionMismatch):
            load_model(path)

    def test_truncated_blob(self, tmp_path):
        policy = next(policies())
        path = tmp_path / "m.tmdl"
        save_model(policy, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-16])
        with pytest.raises(CorruptFile):
            load_model(path)
