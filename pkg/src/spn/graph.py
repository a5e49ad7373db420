"""Graph data model, label alphabet, dataset container, and JSON file I/O.

Graphs are undirected and attributed. Each undirected edge is stored exactly
once in canonical (min, max) order; that ordering fixes which axis of every
downstream edge table (pseudomarginals, potentials, beliefs) belongs to which
endpoint: rows index the smaller-numbered endpoint, columns the larger. All
containers are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DATASET_SPLITS_KEY = "splits"


class DatasetError(ValueError):
    """Raised when a dataset file or graph violates the format contract."""


@dataclass(frozen=True)
class LabelSpace:
    """The label alphabet: its size and optional human-readable names."""

    size: int
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.size < 2:
            raise DatasetError(f"label space must have size >= 2, got {self.size}")
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))
            if len(self.names) != self.size:
                raise DatasetError(
                    f"label space has {self.size} labels but {len(self.names)} names")
            if len(set(self.names)) != len(self.names):
                raise DatasetError("label names must be unique")


def canonicalize_edges(edges: Sequence[Sequence[int]]) -> tuple[tuple[int, int], ...]:
    """Reorder each pair as (min, max) and sort the edge list. Idempotent."""
    return tuple(sorted((min(int(u), int(v)), max(int(u), int(v))) for u, v in edges))


@dataclass(frozen=True)
class Graph:
    """An undirected attributed graph with optional gold labels.

    The constructor canonicalizes the edge list and derives per-node sorted
    neighbor lists; it does not reject malformed input, `validate` reports
    every violated invariant and the loader refuses bad graphs.
    """

    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    features: np.ndarray
    labels: tuple[int, ...] | None = None
    neighbors: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "edges", canonicalize_edges(self.edges))
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(self.num_nodes, -1)
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(int(y) for y in self.labels))
        adj: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for s, t in self.edges:
            if s != t and 0 <= s < self.num_nodes and 0 <= t < self.num_nodes:
                adj[s].append(t)
                adj[t].append(s)
        object.__setattr__(self, "neighbors", tuple(tuple(sorted(ns)) for ns in adj))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1] if self.features.ndim == 2 else 0

    def degree(self, s: int) -> int:
        return len(self.neighbors[s])


def validate(graph: Graph, space: LabelSpace) -> list[str]:
    """Check every Graph invariant against `space`; one diagnostic per violation."""
    issues: list[str] = []
    if graph.num_nodes < 0:
        issues.append(f"negative node count {graph.num_nodes}")
    seen: set[tuple[int, int]] = set()
    for s, t in graph.edges:
        if s == t:
            issues.append(f"self-loop at node {s}")
        if not (0 <= s < graph.num_nodes) or not (0 <= t < graph.num_nodes):
            issues.append(f"edge ({s},{t}) has endpoint outside [0,{graph.num_nodes})")
        if (s, t) in seen:
            issues.append(f"duplicate edge ({s},{t}) after canonicalization")
        seen.add((s, t))
    if graph.features.ndim != 2 or graph.features.shape[0] != graph.num_nodes:
        issues.append(
            f"feature matrix shape {graph.features.shape} does not match "
            f"{graph.num_nodes} nodes")
    if graph.labels is not None:
        if len(graph.labels) != graph.num_nodes:
            issues.append(
                f"{len(graph.labels)} labels for {graph.num_nodes} nodes")
        for s, y in enumerate(graph.labels):
            if not (0 <= y < space.size):
                issues.append(f"label {y} at node {s} out of range [0,{space.size})")
    return issues


@dataclass(frozen=True)
class Dataset:
    """Named splits of graphs sharing one label space and feature dimension."""

    label_space: LabelSpace
    feature_dim: int
    splits: dict[str, tuple[Graph, ...]]

    def split(self, name: str) -> tuple[Graph, ...]:
        if name not in self.splits:
            raise DatasetError(
                f"unknown split '{name}'; have {sorted(self.splits)}")
        return self.splits[name]


def _graph_from_obj(obj: dict, where: str) -> Graph:
    try:
        num_nodes = int(obj["num_nodes"])
        edges = obj.get("edges", [])
        features = obj["features"]
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetError(f"{where}: malformed graph object ({e})") from None
    labels = obj.get("labels")
    feats = np.asarray(features, dtype=np.float64)
    if feats.size == 0:
        feats = feats.reshape(num_nodes, 0) if num_nodes else feats.reshape(0, 0)
    return Graph(num_nodes=num_nodes, edges=edges, features=feats,
                 labels=labels if labels is not None else None)


def load_dataset(path) -> Dataset:
    """Read and validate a JSON dataset file (see README for the schema)."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise DatasetError(f"cannot read dataset file {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise DatasetError(f"malformed JSON in {path}: {e}") from None

    try:
        space_obj = raw["label_space"]
        space = LabelSpace(size=int(space_obj["size"]),
                           names=tuple(space_obj["names"]) if space_obj.get("names") else None)
        feature_dim = int(raw["feature_dim"])
        split_objs = raw[DATASET_SPLITS_KEY]
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetError(f"malformed dataset file {path}: {e}") from None
    if feature_dim < 1:
        raise DatasetError(f"feature_dim must be positive, got {feature_dim}")

    splits: dict[str, tuple[Graph, ...]] = {}
    for split_name, graph_objs in split_objs.items():
        graphs = []
        for i, obj in enumerate(graph_objs):
            where = f"split '{split_name}' graph {i}"
            g = _graph_from_obj(obj, where)
            if g.num_nodes == 0:
                raise DatasetError(f"{where}: empty graph (num_nodes = 0)")
            if g.feature_dim != feature_dim:
                raise DatasetError(
                    f"{where}: feature dim mismatch, expected {feature_dim} "
                    f"got {g.feature_dim}")
            issues = validate(g, space)
            if issues:
                raise DatasetError(f"{where}: " + "; ".join(issues))
            if split_name == "train" and g.labels is None:
                raise DatasetError(f"{where}: train graphs must carry labels")
            graphs.append(g)
        splits[split_name] = tuple(graphs)
    return Dataset(label_space=space, feature_dim=feature_dim, splits=splits)


def write_dataset(dataset: Dataset, path) -> None:
    """Write a dataset back to the JSON format; floats round-trip exactly."""
    obj = {
        "label_space": {"size": dataset.label_space.size},
        "feature_dim": dataset.feature_dim,
        DATASET_SPLITS_KEY: {},
    }
    if dataset.label_space.names is not None:
        obj["label_space"]["names"] = list(dataset.label_space.names)
    for name, graphs in dataset.splits.items():
        entries = []
        for g in graphs:
            entry = {
                "num_nodes": g.num_nodes,
                "edges": [list(e) for e in g.edges],
                "features": g.features.tolist(),
            }
            if g.labels is not None:
                entry["labels"] = list(g.labels)
            entries.append(entry)
        obj[DATASET_SPLITS_KEY][name] = entries
    with open(path, "w") as fh:
        json.dump(obj, fh)


def disjoint_union(graphs: Sequence[Graph]) -> tuple[Graph, list[int], list[int]]:
    """Concatenate graphs into one block graph.

    Returns (union, node_offsets, edge_offsets) where offsets[i] is the start
    of graph i's nodes/edges in the union. Components do not interact in
    message passing, losses, or BP, so training on the union equals summing
    over the graphs.
    """
    node_offsets: list[int] = []
    edge_offsets: list[int] = []
    edges: list[tuple[int, int]] = []
    feats = []
    labels: list[int] = []
    have_labels = all(g.labels is not None for g in graphs)
    n = 0
    m = 0
    for g in graphs:
        node_offsets.append(n)
        edge_offsets.append(m)
        edges.extend((s + n, t + n) for s, t in g.edges)
        feats.append(g.features)
        if have_labels:
            labels.extend(g.labels)
        n += g.num_nodes
        m += g.num_edges
    union = Graph(num_nodes=n, edges=edges,
                  features=np.concatenate(feats, axis=0) if feats else np.zeros((0, 0)),
                  labels=tuple(labels) if have_labels else None)
    return union, node_offsets, edge_offsets
