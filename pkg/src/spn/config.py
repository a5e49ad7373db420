"""Experiment configuration: one JSON file drives train/eval/infer.

Every stochastic component (parameter init, synthetic generation) derives its
seed from the single root seed, so a config plus a dataset pins the entire
run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .bp import BPConfig
from .graph import Dataset, load_dataset
from .learning import TrainConfig
from .models import EncoderConfig
from .synthetic import SyntheticSpec, generate_synthetic


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int = 2
    hidden_dim: int = 16
    shared: bool = False
    edge_head: str = "linear"
    gamma: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    dataset_path: str | None = None
    synthetic: SyntheticSpec | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    bp: BPConfig = field(default_factory=BPConfig)  # final inference

    def __post_init__(self):
        if (self.dataset_path is None) == (self.synthetic is None):
            raise ValueError(
                "config must name exactly one of dataset.path or dataset.synthetic")

    def load_data(self) -> Dataset:
        if self.dataset_path is not None:
            return load_dataset(self.dataset_path)
        return generate_synthetic(self.synthetic)


def _bp_from_obj(obj: dict, default_mode: str) -> BPConfig:
    return BPConfig(
        mode=obj.get("mode", default_mode),
        max_iters=int(obj.get("max_iters", 50)),
        tol=float(obj.get("tol", 1e-6)),
        damping=float(obj.get("damping", 0.0)),
        schedule=obj.get("schedule", "round_robin"),
    )


def synthetic_spec_from_obj(obj: dict, default_seed: int = 0) -> SyntheticSpec:
    return SyntheticSpec(
        num_graphs=obj["num_graphs"],
        nodes_per_graph=int(obj["nodes_per_graph"]),
        label_space=int(obj["label_space"]),
        feature_dim=int(obj["feature_dim"]),
        coupling_strength=float(obj["coupling_strength"]),
        noise=float(obj["noise"]),
        seed=int(obj.get("seed", default_seed)),
    )


def experiment_from_obj(obj: dict) -> ExperimentConfig:
    seed = int(obj.get("seed", 0))
    dataset = obj.get("dataset", {})
    model_obj = obj.get("model", {})
    train_obj = obj.get("train", {})
    refine_bp = _bp_from_obj(train_obj.get("bp", {}), default_mode="sum")
    return ExperimentConfig(
        seed=seed,
        dataset_path=dataset.get("path"),
        synthetic=(synthetic_spec_from_obj(dataset["synthetic"], default_seed=seed + 1)
                   if "synthetic" in dataset else None),
        model=ModelConfig(
            num_layers=int(model_obj.get("num_layers", 2)),
            hidden_dim=int(model_obj.get("hidden_dim", 16)),
            shared=bool(model_obj.get("shared", False)),
            edge_head=model_obj.get("edge_head", "linear"),
            gamma=float(model_obj.get("gamma", 1.0)),
        ),
        train=TrainConfig(
            epochs=int(train_obj.get("epochs", 200)),
            node_lr=float(train_obj.get("node_lr", 5e-3)),
            edge_lr=float(train_obj.get("edge_lr", 5e-3)),
            alpha=float(train_obj.get("alpha", 0.0)),
            refine_epochs=int(train_obj.get("refine_epochs", 0)),
            refine_lr=float(train_obj.get("refine_lr", 1e-5)),
            bp=refine_bp,
            seed=seed,
        ),
        bp=_bp_from_obj(obj.get("bp", {}), default_mode="max"),
    )


def load_experiment(path) -> ExperimentConfig:
    with open(path) as fh:
        return experiment_from_obj(json.load(fh))


def encoder_config(config: ExperimentConfig) -> EncoderConfig:
    return EncoderConfig(num_layers=config.model.num_layers,
                         hidden_dim=config.model.hidden_dim,
                         seed=config.seed)


DEFAULT_CONFIG = {
    "seed": 0,
    "dataset": {"path": "dataset.json"},
    "model": {"num_layers": 2, "hidden_dim": 16, "shared": False,
              "edge_head": "linear", "gamma": 1.0},
    "train": {"epochs": 200, "node_lr": 5e-3, "edge_lr": 5e-3, "alpha": 0.0,
              "refine_epochs": 0, "refine_lr": 1e-5,
              "bp": {"mode": "sum", "max_iters": 50, "tol": 1e-6,
                     "damping": 0.0, "schedule": "round_robin"}},
    "bp": {"mode": "max", "max_iters": 50, "tol": 1e-6, "damping": 0.0,
           "schedule": "round_robin"},
}
