"""Training procedures: proxy objective, consistency penalty, refinement,
maximin-game baseline, pseudolikelihood baseline, and the node-only baseline.

The proxy objective fits node and edge pseudomarginals directly to the
observed labels (negative log-likelihood on every node and every edge); no
inference is run during proxy training. Refinement and the maximin baseline
alternate sum-product BP (which yields beliefs q) with a gradient ascent step
on the potentials that raises the score of the gold assignment and lowers the
expected score under q; the gradient of that objective with respect to a
potential entry is exactly indicator - belief, and the entropy term of the
underlying game is constant in theta for fixed q, so it is omitted here.

Full-batch training runs on the disjoint union of the split's graphs, which
equals summing per-graph losses. Everything is deterministic given the
config.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .bp import BeliefSet, BPConfig, infer_graph, run_bp
from .crf import build_theta
from .graph import Dataset, Graph, disjoint_union
from .metrics import MetricsReport, compute_metrics
from .models import MarginalModels, PseudomarginalSet, cell_expanders, transpose_permutation
from .tensor import Adam, Tensor


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    node_lr: float = 5e-3
    edge_lr: float = 5e-3
    alpha: float = 0.0
    refine_epochs: int = 0
    refine_lr: float = 1e-5
    bp: BPConfig = field(default_factory=lambda: BPConfig(mode="sum"))
    seed: int = 0

    def __post_init__(self):
        if self.node_lr <= 0 or self.edge_lr <= 0 or self.refine_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")


@dataclass
class TrainReport:
    method: str
    epoch_node_loss: list[float] = field(default_factory=list)
    epoch_edge_loss: list[float] = field(default_factory=list)
    epoch_penalty: list[float] = field(default_factory=list)
    objectives: list[float] = field(default_factory=list)  # refine/maximin ascent values
    bp_converged: list[bool] = field(default_factory=list)
    metrics: dict[str, MetricsReport] = field(default_factory=dict)
    wall_clock: dict[str, float] = field(default_factory=dict)
    epochs_run: int = 0

    def core(self) -> dict:
        """Everything except wall-clock timings, for determinism comparisons."""
        return {
            "method": self.method,
            "epoch_node_loss": self.epoch_node_loss,
            "epoch_edge_loss": self.epoch_edge_loss,
            "epoch_penalty": self.epoch_penalty,
            "objectives": self.objectives,
            "bp_converged": self.bp_converged,
            "metrics": {k: v.to_dict() for k, v in self.metrics.items()},
            "epochs_run": self.epochs_run,
        }

    def to_dict(self) -> dict:
        out = self.core()
        out["wall_clock"] = self.wall_clock
        return out


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def _gold(graph: Graph, labels) -> np.ndarray:
    if labels is None:
        labels = graph.labels
    if labels is None:
        raise ValueError("graph has no labels and none were supplied")
    y = np.asarray(labels, dtype=np.intp)
    if y.shape != (graph.num_nodes,):
        raise ValueError(f"{y.size} labels for {graph.num_nodes} nodes")
    return y


def _node_onehot(graph: Graph, y: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((graph.num_nodes, k))
    out[np.arange(graph.num_nodes), y] = 1.0
    return out


def _edge_onehot(graph: Graph, y: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((graph.num_edges, k * k))
    for e, (s, t) in enumerate(graph.edges):
        out[e, y[s] * k + y[t]] = 1.0
    return out


def proxy_loss_parts(models: MarginalModels, graph: Graph, labels=None,
                     reps=None) -> tuple[Tensor, Tensor]:
    """(node term, edge term) of the proxy NLL, both scalar Tensors."""
    y = _gold(graph, labels)
    k = models.num_labels
    reps = reps or models.representations(graph)
    node_term = T.scalar_scale(
        T.reduce_sum(T.mul(models.node_log_tau(graph, reps),
                           T.constant(_node_onehot(graph, y, k)))), -1.0)
    if graph.num_edges == 0:
        return node_term, T.constant(np.zeros(()))
    edge_term = T.scalar_scale(
        T.reduce_sum(T.mul(models.edge_log_tau(graph, reps),
                           T.constant(_edge_onehot(graph, y, k)))), -1.0)
    return node_term, edge_term


def proxy_loss(models: MarginalModels, graph: Graph, labels=None) -> Tensor:
    """Negated log-likelihood of the gold labels on every node and edge."""
    node_term, edge_term = proxy_loss_parts(models, graph, labels)
    return node_term + edge_term


def consistency_penalty(tau, graph: Graph) -> Tensor:
    """Quadratic penalty on edge-to-node marginalization mismatch.

    `tau` is either a PseudomarginalSet or a (node, edge_flat) pair of
    Tensors; the result is a scalar Tensor either way (differentiable in the
    Tensor case).
    """
    if isinstance(tau, PseudomarginalSet):
        node = T.constant(tau.node)
        edge = T.constant(tau.edge.reshape(len(tau.edges), -1))
        k = tau.num_labels
    else:
        node, edge = tau
        k = node.shape[1]
    if graph.num_edges == 0:
        return T.constant(np.zeros(()))
    rep, tile = cell_expanders(k)
    src = np.fromiter((e[0] for e in graph.edges), dtype=np.intp)
    dst = np.fromiter((e[1] for e in graph.edges), dtype=np.intp)
    row_sums = T.matmul(edge, T.constant(rep.T))   # sum over y_t -> compare tau_s
    col_sums = T.matmul(edge, T.constant(tile.T))  # sum over y_s -> compare tau_t
    d_row = row_sums - T.row_gather(node, src)
    d_col = col_sums - T.row_gather(node, dst)
    return T.reduce_sum(T.mul(d_row, d_row)) + T.reduce_sum(T.mul(d_col, d_col))


def model_theta_tensors(models: MarginalModels, graph: Graph,
                        reps=None) -> tuple[Tensor, Tensor]:
    """Differentiable potential tables from the current pseudomarginal heads.

    Uses raw (gamma = 1) logits and no clamping: log-softmax keeps everything
    finite. Returns (node theta (N, |Y|), edge theta flat (E, |Y|^2)).
    """
    k = models.num_labels
    reps = reps or models.representations(graph)
    node_log_tau = models.node_log_tau(graph, reps)
    if graph.num_edges == 0:
        return node_log_tau, T.constant(np.zeros((0, k * k)))
    rep, tile = cell_expanders(k)
    src = np.fromiter((e[0] for e in graph.edges), dtype=np.intp)
    dst = np.fromiter((e[1] for e in graph.edges), dtype=np.intp)
    edge_log_tau = models.edge_log_tau(graph, reps)
    edge_theta = (edge_log_tau
                  - T.matmul(T.row_gather(node_log_tau, src), T.constant(rep))
                  - T.matmul(T.row_gather(node_log_tau, dst), T.constant(tile)))
    return node_log_tau, edge_theta


def refinement_objective(theta_node: Tensor, theta_edge_flat: Tensor,
                         graph: Graph, labels, beliefs: BeliefSet) -> Tensor:
    """Gold-label score minus expected score under fixed beliefs.

    Works on any theta tensors (model-derived or leaf parameters); the
    gradient with respect to a theta entry is indicator - belief.
    """
    y = _gold(graph, labels)
    k = theta_node.shape[1]
    node_w = _node_onehot(graph, y, k) - beliefs.node
    obj = T.reduce_sum(T.mul(theta_node, T.constant(node_w)))
    if graph.num_edges:
        edge_w = _edge_onehot(graph, y, k) - beliefs.edge.reshape(graph.num_edges, -1)
        obj = obj + T.reduce_sum(T.mul(theta_edge_flat, T.constant(edge_w)))
    return obj


def pseudolikelihood_loss(models: MarginalModels, graph: Graph, labels=None) -> Tensor:
    """Negative log product of per-node conditionals given gold neighbors.

    p(y_s | y*_N(s)) is proportional to exp(theta_s(y_s) + sum of incident
    theta_st(y_s, y*_t)); on an edgeless graph this reduces to the node part
    of the proxy loss.
    """
    y = _gold(graph, labels)
    k = models.num_labels
    reps = models.representations(graph)
    theta_node, theta_edge = model_theta_tensors(models, graph, reps)
    cond = theta_node
    if graph.num_edges:
        e_count = graph.num_edges
        src = np.fromiter((e[0] for e in graph.edges), dtype=np.intp)
        dst = np.fromiter((e[1] for e in graph.edges), dtype=np.intp)
        # theta_st(y*_s, .) goes to the column endpoint; rows of the reshaped
        # (E*|Y|, |Y|) table are contiguous slices theta_st(a, .)
        to_dst = T.row_gather(T.reshape(theta_edge, (e_count * k, k)),
                              np.arange(e_count) * k + y[src])
        # theta_st(., y*_t) goes to the row endpoint, via per-edge transpose
        theta_edge_t = T.matmul(theta_edge, T.constant(transpose_permutation(k)))
        to_src = T.row_gather(T.reshape(theta_edge_t, (e_count * k, k)),
                              np.arange(e_count) * k + y[dst])
        scatter_src = np.zeros((graph.num_nodes, e_count))
        scatter_dst = np.zeros((graph.num_nodes, e_count))
        scatter_src[src, np.arange(e_count)] = 1.0
        scatter_dst[dst, np.arange(e_count)] = 1.0
        cond = (cond + T.matmul(T.constant(scatter_src), to_src)
                + T.matmul(T.constant(scatter_dst), to_dst))
    return T.scalar_scale(
        T.reduce_sum(T.mul(T.log_softmax_rows(cond),
                           T.constant(_node_onehot(graph, y, k)))), -1.0)


# ---------------------------------------------------------------------------
# optimization plumbing
# ---------------------------------------------------------------------------

def _grads_for(params: list[Tensor], grad_map: dict) -> dict:
    return {p: grad_map.get(p, np.zeros_like(p.values)) for p in params}


def make_optimizers(models: MarginalModels, node_lr: float, edge_lr: float
                    ) -> tuple[Adam, Adam]:
    return (Adam(models.node_parameters(), lr=node_lr),
            Adam(models.edge_parameters(), lr=edge_lr))


def refine_step(models: MarginalModels, graph: Graph, labels, bp_config: BPConfig,
                node_opt: Adam, edge_opt: Adam) -> tuple[float, bool]:
    """One coordinate-descent step of the game: BP for q, then ascend theta.

    Beliefs are treated as constants (no gradient through BP), and the
    expectations are computed exactly from the beliefs rather than sampled.
    Returns (objective value, BP converged flag).
    """
    if bp_config.mode != "sum":
        raise ValueError("refinement requires sum-product beliefs")
    y = _gold(graph, labels)
    tau = models.pseudomarginals(graph, apply_temperature=False)
    theta = build_theta(tau)
    result = run_bp(theta, graph, bp_config)
    reps = models.representations(graph)
    theta_node, theta_edge = model_theta_tensors(models, graph, reps)
    obj = refinement_objective(theta_node, theta_edge, graph, y, result.beliefs)
    grads = T.backward(T.scalar_scale(obj, -1.0))
    node_opt.step(_grads_for(node_opt.params, grads))
    edge_opt.step(_grads_for(edge_opt.params, grads))
    return float(obj.values), result.converged


# ---------------------------------------------------------------------------
# training loops (full batch over the train split)
# ---------------------------------------------------------------------------

def _train_union(dataset: Dataset) -> Graph:
    graphs = dataset.split("train")
    if not graphs:
        raise ValueError("train split is empty")
    union, _, _ = disjoint_union(graphs)
    if union.labels is None:
        raise ValueError("train split must be fully labeled")
    return union


def _eval_metrics(models: MarginalModels, dataset: Dataset, eval_bp: BPConfig,
                  report: TrainReport) -> None:
    start = time.perf_counter()
    for name, graphs in dataset.splits.items():
        if not graphs or any(g.labels is None for g in graphs):
            continue
        preds = [infer_graph(models, g, eval_bp).labels for g in graphs]
        report.metrics[name] = compute_metrics(preds, graphs)
    report.wall_clock["metrics"] = time.perf_counter() - start


def train_proxy(models: MarginalModels, dataset: Dataset, config: TrainConfig,
                eval_bp: BPConfig | None = None) -> TrainReport:
    """Full-batch Adam on the proxy NLL plus alpha-weighted consistency penalty."""
    union = _train_union(dataset)
    node_opt, edge_opt = make_optimizers(models, config.node_lr, config.edge_lr)
    report = TrainReport(method="proxy")
    start = time.perf_counter()
    for _ in range(config.epochs):
        reps = models.representations(union)
        node_term, edge_term = proxy_loss_parts(models, union, reps=reps)
        pen = consistency_penalty(
            (models.node_tau(union, reps), models.edge_tau(union, reps)), union)
        loss = node_term + edge_term + T.scalar_scale(pen, config.alpha)
        grads = T.backward(loss)
        node_opt.step(_grads_for(node_opt.params, grads))
        edge_opt.step(_grads_for(edge_opt.params, grads))
        report.epoch_node_loss.append(float(node_term.values))
        report.epoch_edge_loss.append(float(edge_term.values))
        report.epoch_penalty.append(float(pen.values))
        report.epochs_run += 1
    report.wall_clock["train"] = time.perf_counter() - start

    if config.refine_epochs > 0:
        refine(models, dataset, config, report)
    if eval_bp is not None:
        _eval_metrics(models, dataset, eval_bp, report)
    return report


def refine(models: MarginalModels, dataset: Dataset, config: TrainConfig,
           report: TrainReport | None = None) -> TrainReport:
    """Post-proxy refinement: config.refine_epochs game steps at refine_lr."""
    union = _train_union(dataset)
    report = report if report is not None else TrainReport(method="refine")
    node_opt, edge_opt = make_optimizers(models, config.refine_lr, config.refine_lr)
    start = time.perf_counter()
    for _ in range(config.refine_epochs):
        obj, conv = refine_step(models, union, union.labels, config.bp,
                                node_opt, edge_opt)
        report.objectives.append(obj)
        report.bp_converged.append(conv)
    report.wall_clock["refine"] = time.perf_counter() - start
    return report


def train_maximin(models: MarginalModels, dataset: Dataset, config: TrainConfig,
                  eval_bp: BPConfig | None = None) -> TrainReport:
    """The from-scratch game baseline: the refinement loop without a proxy phase.

    Uses the regular node/edge learning rates; each epoch runs sum-product BP
    before the ascent step, which is what makes it slow and unstable compared
    to proxy training.
    """
    union = _train_union(dataset)
    node_opt, edge_opt = make_optimizers(models, config.node_lr, config.edge_lr)
    report = TrainReport(method="maximin")
    start = time.perf_counter()
    for _ in range(config.epochs):
        obj, conv = refine_step(models, union, union.labels, config.bp,
                                node_opt, edge_opt)
        report.objectives.append(obj)
        report.bp_converged.append(conv)
        report.epochs_run += 1
    report.wall_clock["train"] = time.perf_counter() - start
    if eval_bp is not None:
        _eval_metrics(models, dataset, eval_bp, report)
    return report


def train_pseudolikelihood(models: MarginalModels, dataset: Dataset, config: TrainConfig,
                           eval_bp: BPConfig | None = None) -> TrainReport:
    """Full-batch Adam on the pseudolikelihood loss."""
    union = _train_union(dataset)
    node_opt, edge_opt = make_optimizers(models, config.node_lr, config.edge_lr)
    report = TrainReport(method="pseudolikelihood")
    start = time.perf_counter()
    for _ in range(config.epochs):
        loss = pseudolikelihood_loss(models, union)
        grads = T.backward(loss)
        node_opt.step(_grads_for(node_opt.params, grads))
        edge_opt.step(_grads_for(edge_opt.params, grads))
        report.epoch_node_loss.append(float(loss.values))
        report.epoch_edge_loss.append(0.0)
        report.epoch_penalty.append(0.0)
        report.epochs_run += 1
    report.wall_clock["train"] = time.perf_counter() - start
    if eval_bp is not None:
        _eval_metrics(models, dataset, eval_bp, report)
    return report


def train_node_only(models: MarginalModels, dataset: Dataset, config: TrainConfig,
                    eval_metrics: bool = True) -> TrainReport:
    """Factorized baseline: fit the node head only; decoding is per-node argmax.

    Never touches the edge head, so no edge potentials are ever constructed.
    """
    union = _train_union(dataset)
    node_opt = Adam(models.node_parameters(), lr=config.node_lr)
    report = TrainReport(method="node-only")
    start = time.perf_counter()
    y = _gold(union, None)
    onehot = T.constant(_node_onehot(union, y, models.num_labels))
    for _ in range(config.epochs):
        u = models.node_encoder.forward(union)
        node_term = T.scalar_scale(
            T.reduce_sum(T.mul(T.log_softmax_rows(
                T.matmul(u, models.node_w) + models.node_b), onehot)), -1.0)
        grads = T.backward(node_term)
        node_opt.step(_grads_for(node_opt.params, grads))
        report.epoch_node_loss.append(float(node_term.values))
        report.epoch_edge_loss.append(0.0)
        report.epoch_penalty.append(0.0)
        report.epochs_run += 1
    report.wall_clock["train"] = time.perf_counter() - start
    if eval_metrics:
        start = time.perf_counter()
        for name, graphs in dataset.splits.items():
            if not graphs or any(g.labels is None for g in graphs):
                continue
            preds = [node_only_predict(models, g) for g in graphs]
            report.metrics[name] = compute_metrics(preds, graphs)
        report.wall_clock["metrics"] = time.perf_counter() - start
    return report


def node_only_predict(models: MarginalModels, graph: Graph) -> tuple[int, ...]:
    """Per-node argmax of the node head alone (no edge potentials, no BP)."""
    u = models.node_encoder.forward(graph)
    logits = T.matmul(u, models.node_w) + models.node_b
    return tuple(int(v) for v in np.argmax(logits.values, axis=1))
