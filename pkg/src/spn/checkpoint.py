"""Model checkpoints: a versioned JSON map of parameter name -> shape + values."""

from __future__ import annotations

import json

import numpy as np

from .models import EncoderConfig, MarginalModels

CHECKPOINT_MAGIC = "spn-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, models: MarginalModels, extra: dict | None = None) -> None:
    enc = models.encoder_config
    obj = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "model": {
            "feature_dim": models.feature_dim,
            "num_labels": models.num_labels,
            "encoder": {"num_layers": enc.num_layers, "hidden_dim": enc.hidden_dim,
                        "aggregation": enc.aggregation, "activation": enc.activation,
                        "seed": enc.seed},
            "shared": models.shared,
            "edge_head": models.edge_head,
            "gamma": models.gamma,
            "seed": models.seed,
        },
        "params": {
            name: {"shape": list(p.values.shape), "values": p.values.ravel().tolist()}
            for name, p in models.named_parameters().items()
        },
    }
    if extra:
        obj["extra"] = extra
    with open(path, "w") as fh:
        json.dump(obj, fh)


def load_checkpoint(path) -> tuple[MarginalModels, dict]:
    """Rebuild a MarginalModels from a checkpoint file; returns (models, extra)."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise CheckpointError(f"malformed checkpoint {path}: {e}") from None
    if obj.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic string)")
    if obj.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {obj.get('version')}")
    meta = obj["model"]
    enc = meta["encoder"]
    models = MarginalModels(
        feature_dim=int(meta["feature_dim"]),
        num_labels=int(meta["num_labels"]),
        encoder=EncoderConfig(num_layers=int(enc["num_layers"]),
                              hidden_dim=int(enc["hidden_dim"]),
                              aggregation=enc["aggregation"],
                              activation=enc["activation"],
                              seed=int(enc["seed"])),
        shared=bool(meta["shared"]),
        edge_head=meta["edge_head"],
        gamma=float(meta["gamma"]),
        seed=int(meta["seed"]),
    )
    params = models.named_parameters()
    stored = obj["params"]
    if set(stored) != set(params):
        raise CheckpointError(
            f"parameter names mismatch: checkpoint {sorted(stored)} vs model "
            f"{sorted(params)}")
    for name, entry in stored.items():
        shape = tuple(entry["shape"])
        if params[name].values.shape != shape:
            raise CheckpointError(
                f"parameter {name}: checkpoint shape {shape} vs model "
                f"{params[name].values.shape}")
        params[name].values = np.asarray(entry["values"], dtype=np.float64).reshape(shape)
    return models, obj.get("extra", {})
