import json

import numpy as np
import pytest

from core.errors import CorruptModel, ModelError, VersionMismatch
from core.features import FeatureStats
from core.model_store import FORMAT_VERSION, ModelFile, load_model, save_model
from core.tree_policy import PolicyConfig, init_parameters


@pytest.fixture
def model():
    cfg = PolicyConfig(d_model=8, k_steps=2, temperature=0.7)
    rng = np.random.default_rng(0)
    stats = FeatureStats(mean=rng.normal(size=cfg.feature_dim), std=rng.random(cfg.feature_dim) + 0.5)
    return ModelFile(params=init_parameters(cfg, rng), stats=stats, policy=cfg,
                     train_config={"iterations": 3}, seed=42)


def test_round_trip_is_bit_exact(tmp_path, model):
    path = tmp_path / "model.json"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.policy == model.policy
    assert loaded.seed == 42 and loaded.train_config == {"iterations": 3}
    assert list(loaded.params) == list(model.params)
    for name, tensor in model.params.items():
        np.testing.assert_array_equal(loaded.params[name].data, tensor.data)
        assert loaded.params.decay[name] == model.params.decay[name]
    np.testing.assert_array_equal(loaded.stats.mean, model.stats.mean)
    np.testing.assert_array_equal(loaded.stats.std, model.stats.std)
    assert not (tmp_path / "model.json.tmp").exists()


def test_truncated_file_is_corrupt(tmp_path, model):
    path = tmp_path / "model.json"
    save_model(model, path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(CorruptModel):
        load_model(path)


def test_future_version_is_rejected(tmp_path, model):
    path = tmp_path / "model.json"
    save_model(model, path)
    payload = json.loads(path.read_text())
    payload["format_version"] = FORMAT_VERSION + 1
    path.write_text(json.dumps(payload))
    with pytest.raises(VersionMismatch):
        load_model(path)


@pytest.mark.parametrize("damage", [
    lambda p: p.pop("params"),
    lambda p: p["params"]["embed.in.W"].update(shape=[3, 3]),
    lambda p: p["stats"].update(mean=[0.0, 1.0]),
    lambda p: p["policy"].update(d_model=-1),
])
def test_damaged_payloads_are_corrupt(tmp_path, model, damage):
    path = tmp_path / "model.json"
    save_model(model, path)
    payload = json.loads(path.read_text())
    damage(payload)
    path.write_text(json.dumps(payload))
    with pytest.raises(ModelError):
        load_model(path)


def test_binary_garbage_is_corrupt(tmp_path):
    path = tmp_path / "model.json"
    path.write_bytes(b"\xff\xfe\x00garbage")
    with pytest.raises(CorruptModel):
        load_model(path)
