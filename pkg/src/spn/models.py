"""Differentiable encoders and heads producing node and edge pseudomarginals.

The encoder is a mean-aggregation message-passing network: layer l computes
h_s = relu(W_self h_s + W_nbr mean_{t in N(s)} h_t + b), with a zero neighbor
aggregate for isolated nodes. A node head f maps representations to |Y|
logits; an edge head g (linear on the concatenated pair, or bilinear) maps a
pair of representations to a |Y| x |Y| logit table whose rows index the
canonical smaller-numbered endpoint. Softmax turns logits into
pseudomarginals, so normalization and positivity hold for any parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import tensor as T
from .graph import Graph
from .tensor import Tensor

EDGE_HEAD_VARIANTS = ("linear", "bilinear")


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 2
    hidden_dim: int = 16
    aggregation: str = "mean"
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.hidden_dim < 1:
            raise ValueError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if self.aggregation != "mean":
            raise ValueError(f"unsupported aggregation '{self.aggregation}'")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation '{self.activation}'")


@dataclass(frozen=True)
class PseudomarginalSet:
    """Per-node distributions and per-canonical-edge joint tables.

    node: (N, |Y|); edge: (E, |Y|, |Y|) with rows indexed by the smaller
    endpoint of each canonical edge in `edges`. Entries are strictly positive
    and every distribution sums to one.
    """

    node: np.ndarray
    edge: np.ndarray
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        node = np.asarray(self.node, dtype=np.float64)
        edge = np.asarray(self.edge, dtype=np.float64)
        object.__setattr__(self, "node", node)
        object.__setattr__(self, "edge", edge)
        object.__setattr__(self, "edges", tuple((int(s), int(t)) for s, t in self.edges))
        if edge.shape[0] != len(self.edges):
            raise ValueError(
                f"{edge.shape[0]} edge tables for {len(self.edges)} edges")
        if node.size and (np.any(node <= 0.0)
                          or np.max(np.abs(node.sum(axis=1) - 1.0)) > 1e-9):
            raise ValueError("node pseudomarginals must be positive and normalized")
        if edge.size and (np.any(edge <= 0.0)
                          or np.max(np.abs(edge.sum(axis=(1, 2)) - 1.0)) > 1e-9):
            raise ValueError("edge pseudomarginals must be positive and normalized")

    @property
    def num_labels(self) -> int:
        return self.node.shape[1]


@lru_cache(maxsize=None)
def cell_expanders(num_labels: int) -> tuple[np.ndarray, np.ndarray]:
    """Constant maps from per-endpoint vectors to flattened edge tables.

    REP[a, a*Y+b] = 1 spreads a row-endpoint vector across its row of cells;
    TILE[b, a*Y+b] = 1 does the same for the column endpoint. x @ REP + y @
    TILE therefore builds the table x_a + y_b in flat layout.
    """
    y = num_labels
    rep = np.zeros((y, y * y))
    tile = np.zeros((y, y * y))
    for a in range(y):
        for b in range(y):
            rep[a, a * y + b] = 1.0
            tile[b, a * y + b] = 1.0
    return rep, tile


@lru_cache(maxsize=None)
def transpose_permutation(num_labels: int) -> np.ndarray:
    """Permutation P with (flat_table @ P) the per-edge transposed table."""
    y = num_labels
    perm = np.zeros((y * y, y * y))
    for a in range(y):
        for b in range(y):
            perm[a * y + b, b * y + a] = 1.0
    return perm


def mean_aggregation_matrix(graph: Graph) -> np.ndarray:
    """Row s averages the neighbors of s; all-zero row for isolated nodes."""
    n = graph.num_nodes
    agg = np.zeros((n, n))
    for s in range(n):
        ns = graph.neighbors[s]
        if ns:
            agg[s, list(ns)] = 1.0 / len(ns)
    return agg


class Encoder:
    """Mean-aggregation message-passing encoder over Tensor ops."""

    def __init__(self, config: EncoderConfig, in_dim: int, name: str = "enc"):
        self.config = config
        self.in_dim = in_dim
        self.name = name
        self.forward_count = 0
        rng = np.random.default_rng(config.seed)
        self.layers: list[tuple[Tensor, Tensor, Tensor]] = []
        dim = in_dim
        for i in range(config.num_layers):
            w_self = T.parameter(T.glorot_uniform(rng, dim, config.hidden_dim),
                                 name=f"{name}.l{i}.w_self")
            w_nbr = T.parameter(T.glorot_uniform(rng, dim, config.hidden_dim),
                                name=f"{name}.l{i}.w_nbr")
            bias = T.parameter(np.zeros(config.hidden_dim), name=f"{name}.l{i}.b")
            self.layers.append((w_self, w_nbr, bias))
            dim = config.hidden_dim

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer]

    def forward(self, graph: Graph) -> Tensor:
        if graph.feature_dim != self.in_dim:
            raise T.ShapeError(
                f"encoder expects feature dim {self.in_dim}, "
                f"graph has {graph.feature_dim}")
        self.forward_count += 1
        agg = T.constant(mean_aggregation_matrix(graph))
        h = T.constant(graph.features)
        for w_self, w_nbr, bias in self.layers:
            h = T.relu(T.matmul(h, w_self) + T.matmul(T.matmul(agg, h), w_nbr) + bias)
        return h


class MarginalModels:
    """Encoder(s) plus node head f and edge head g with temperature gamma."""

    def __init__(self, feature_dim: int, num_labels: int,
                 encoder: EncoderConfig | None = None, shared: bool = False,
                 edge_head: str = "linear", gamma: float = 1.0, seed: int = 0):
        if edge_head not in EDGE_HEAD_VARIANTS:
            raise ValueError(
                f"unknown edge head variant '{edge_head}', expected one of "
                f"{EDGE_HEAD_VARIANTS}")
        if gamma <= 0:
            raise ValueError(f"gamma must be positive, got {gamma}")
        encoder = encoder or EncoderConfig()
        self.feature_dim = feature_dim
        self.num_labels = num_labels
        self.encoder_config = encoder
        self.shared = shared
        self.edge_head = edge_head
        self.gamma = float(gamma)
        self.seed = seed
        self.edge_forward_count = 0  # instrumentation: edge-potential constructions

        hidden = encoder.hidden_dim
        ss = np.random.SeedSequence(seed)
        node_seed, edge_seed, head_seed = (int(s.generate_state(1)[0])
                                           for s in ss.spawn(3))
        node_cfg = EncoderConfig(encoder.num_layers, hidden, encoder.aggregation,
                                 encoder.activation, node_seed)
        self.node_encoder = Encoder(node_cfg, feature_dim, name="node_enc")
        if shared:
            self.edge_encoder = self.node_encoder
        else:
            edge_cfg = EncoderConfig(encoder.num_layers, hidden, encoder.aggregation,
                                     encoder.activation, edge_seed)
            self.edge_encoder = Encoder(edge_cfg, feature_dim, name="edge_enc")

        rng = np.random.default_rng(head_seed)
        y = num_labels
        self.node_w = T.parameter(T.glorot_uniform(rng, hidden, y), name="node_head.w")
        self.node_b = T.parameter(np.zeros(y), name="node_head.b")
        if edge_head == "linear":
            self.edge_w = T.parameter(T.glorot_uniform(rng, 2 * hidden, y * y),
                                      name="edge_head.w")
            self.edge_b = T.parameter(np.zeros(y * y), name="edge_head.b")
        else:
            self.edge_w = T.parameter(T.glorot_uniform(rng, hidden, y), name="edge_head.w")
            self.edge_b = None

    # -- parameter groups ---------------------------------------------------

    def node_parameters(self) -> list[Tensor]:
        # with a shared encoder its parameters live in the node group
        params = self.node_encoder.parameters() + [self.node_w, self.node_b]
        return params

    def edge_parameters(self) -> list[Tensor]:
        params = [] if self.shared else self.edge_encoder.parameters()
        params = params + [self.edge_w]
        if self.edge_b is not None:
            params.append(self.edge_b)
        return params

    def parameters(self) -> list[Tensor]:
        return self.node_parameters() + self.edge_parameters()

    def named_parameters(self) -> dict[str, Tensor]:
        return {p.name: p for p in self.parameters()}

    # -- forward passes -----------------------------------------------------

    def representations(self, graph: Graph) -> tuple[Tensor, Tensor]:
        """(u, v) representation matrices; a single forward when shared."""
        u = self.node_encoder.forward(graph)
        v = u if self.shared else self.edge_encoder.forward(graph)
        return u, v

    def node_logits(self, graph: Graph, reps: tuple[Tensor, Tensor] | None = None) -> Tensor:
        u = (reps or self.representations(graph))[0]
        return T.matmul(u, self.node_w) + self.node_b

    def edge_logits(self, graph: Graph, reps: tuple[Tensor, Tensor] | None = None,
                    apply_temperature: bool = False) -> Tensor:
        """Flattened (E, |Y|^2) edge logit tables, rows = smaller endpoint."""
        self.edge_forward_count += 1
        y = self.num_labels
        if graph.num_edges == 0:
            return T.constant(np.zeros((0, y * y)))
        v = (reps or self.representations(graph))[1]
        src = np.fromiter((e[0] for e in graph.edges), dtype=np.intp)
        dst = np.fromiter((e[1] for e in graph.edges), dtype=np.intp)
        if self.edge_head == "linear":
            pair = T.concat(T.row_gather(v, src), T.row_gather(v, dst), axis=1)
            logits = T.matmul(pair, self.edge_w) + self.edge_b
        else:
            proj = T.matmul(v, self.edge_w)
            rep, tile = cell_expanders(y)
            logits = T.mul(T.matmul(T.row_gather(proj, src), T.constant(rep)),
                           T.matmul(T.row_gather(proj, dst), T.constant(tile)))
        if apply_temperature:
            logits = T.scalar_scale(logits, 1.0 / self.gamma)
        return logits

    def node_tau(self, graph: Graph, reps=None) -> Tensor:
        return T.softmax_rows(self.node_logits(graph, reps))

    def node_log_tau(self, graph: Graph, reps=None) -> Tensor:
        return T.log_softmax_rows(self.node_logits(graph, reps))

    def edge_tau(self, graph: Graph, reps=None, apply_temperature: bool = False) -> Tensor:
        logits = self.edge_logits(graph, reps, apply_temperature)
        if logits.shape[0] == 0:
            return logits
        return T.softmax_rows(logits)

    def edge_log_tau(self, graph: Graph, reps=None, apply_temperature: bool = False) -> Tensor:
        logits = self.edge_logits(graph, reps, apply_temperature)
        if logits.shape[0] == 0:
            return logits
        return T.log_softmax_rows(logits)

    def pseudomarginals(self, graph: Graph, apply_temperature: bool = False) -> PseudomarginalSet:
        """Numpy snapshot of both heads, for potential building and BP.

        Softmax outputs are floored at 1e-300: extreme logit gaps underflow
        to exactly zero in float64, and the pseudomarginal contract requires
        strictly positive entries. The floor is far below the clamping used
        when building potentials, so downstream values are unchanged.
        """
        reps = self.representations(graph)
        y = self.num_labels
        node = np.maximum(self.node_tau(graph, reps).values, 1e-300)
        edge = np.maximum(self.edge_tau(graph, reps, apply_temperature).values, 1e-300)
        return PseudomarginalSet(node=node,
                                 edge=edge.reshape(graph.num_edges, y, y),
                                 edges=graph.edges)


def node_pseudomarginals(models: MarginalModels, graph: Graph) -> np.ndarray:
    """tau_s = softmax(f(u_s)) for every node, as an (N, |Y|) array."""
    return models.node_tau(graph).values


def edge_pseudomarginals(models: MarginalModels, graph: Graph,
                         apply_temperature: bool = False) -> np.ndarray:
    """tau_st tables as an (E, |Y|, |Y|) array, rows = smaller endpoint."""
    y = models.num_labels
    return models.edge_tau(graph, apply_temperature=apply_temperature).values.reshape(
        graph.num_edges, y, y)
