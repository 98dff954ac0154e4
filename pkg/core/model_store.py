#!/usr/bin/env python3
"""
Model files
Versioned JSON holding policy parameters, feature statistics and the
settings they were trained with
"""

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict

import numpy as np

from .errors import ConfigError, CorruptModel, VersionMismatch
from .features import FeatureStats
from .nn_core import ParameterSet
from .performance_logger import log_success
from .tree_policy import PolicyConfig

FORMAT_VERSION = 1


@dataclass
class ModelFile:
    params: ParameterSet
    stats: FeatureStats
    policy: PolicyConfig
    train_config: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0


def _encode_array(value: np.ndarray) -> Dict[str, Any]:
    # float repr round-trips exactly through JSON
    return {"shape": list(value.shape), "data": [float(v) for v in value.reshape(-1)]}


def _decode_array(entry: Dict[str, Any]) -> np.ndarray:
    shape = tuple(int(s) for s in entry["shape"])
    data = np.asarray(entry["data"], dtype=np.float64)
    if data.size != int(np.prod(shape)):
        raise CorruptModel(f"array data has {data.size} values, shape {shape} needs {int(np.prod(shape))}")
    return data.reshape(shape)


def save_model(model: ModelFile, path) -> None:
    """Write atomically: tmp file then rename"""
    payload = {
        "format_version": FORMAT_VERSION,
        "policy": asdict(model.policy),
        "feature_dim": model.policy.feature_dim,
        "stats": model.stats.to_dict(),
        "params": {
            name: {**_encode_array(tensor.data),
                   "trainable": model.params.trainable[name],
                   "decay": model.params.decay[name]}
            for name, tensor in model.params.items()
        },
        "train_config": model.train_config,
        "seed": model.seed,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, default=str)
    os.replace(tmp_path, path)
    log_success("ModelStore", f"Saved model to {path}", "💾",
                stats={"parameters": model.params.num_parameters})


def load_model(path) -> ModelFile:
    """
    Raises:
        CorruptModel: unreadable JSON or missing / malformed arrays
        VersionMismatch: written by an unsupported format version
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise CorruptModel(f"{path}: {e}") from e
    except UnicodeDecodeError as e:
        raise CorruptModel(f"{path}: not a text model file") from e

    if not isinstance(payload, dict):
        raise CorruptModel(f"{path}: top level is not an object")
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version!r}, expected {FORMAT_VERSION}")

    try:
        policy = PolicyConfig(**payload["policy"])
        stats = FeatureStats.from_dict(payload["stats"])
        params = ParameterSet()
        for name, entry in payload["params"].items():
            params.add(name, _decode_array(entry), trainable=bool(entry.get("trainable", True)),
                       decay=bool(entry.get("decay", True)))
        train_config = payload.get("train_config", {})
        seed = int(payload.get("seed", 0))
    except (KeyError, TypeError, ValueError, ConfigError) as e:
        raise CorruptModel(f"{path}: {e}") from e

    if stats.mean.shape != (policy.feature_dim,) or stats.std.shape != (policy.feature_dim,):
        raise CorruptModel(f"{path}: feature statistics do not match feature_dim {policy.feature_dim}")
    if "embed.in.W" not in params or params["embed.in.W"].shape != (policy.feature_dim, policy.d_model):
        raise CorruptModel(f"{path}: embedder shape does not match d_model {policy.d_model}")
    return ModelFile(params=params, stats=stats, policy=policy, train_config=train_config, seed=seed)
