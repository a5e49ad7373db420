"""Potential tables, the exact enumeration oracle, and Bethe diagnostics.

A pairwise model over node labels assigns every full assignment y the
unnormalized log score sum_s theta_s(y_s) + sum_(s,t) theta_st(y_s, y_t).
Potentials here are assembled from pseudomarginals as theta_s = log tau_s and
theta_st = log(tau_st / (tau_s tau_t)), clamped away from zero, which makes
the pseudomarginals a fixed point of sum-product message passing.

The oracle enumerates all |Y|^N assignments (desk scale only) to deliver the
exact log partition, marginals, MAP, and entropy against which the iterative
machinery is tested.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, xlogy

from .graph import Graph
from .models import PseudomarginalSet

DEFAULT_EPS = 1e-8
DEFAULT_ASSIGNMENT_CAP = 2_000_000


class OracleInfeasibleError(ValueError):
    """Enumeration would exceed the configured assignment cap."""


@dataclass(frozen=True)
class ThetaFields:
    """Log-potential tables: node (N, |Y|), edge (E, |Y|, |Y|) per canonical edge."""

    node: np.ndarray
    edge: np.ndarray
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        node = np.asarray(self.node, dtype=np.float64)
        edge = np.asarray(self.edge, dtype=np.float64)
        object.__setattr__(self, "node", node)
        object.__setattr__(self, "edge", edge)
        object.__setattr__(self, "edges", tuple((int(s), int(t)) for s, t in self.edges))
        if not (np.all(np.isfinite(node)) and np.all(np.isfinite(edge))):
            raise ValueError("theta tables must be finite")
        if edge.shape[0] != len(self.edges):
            raise ValueError(f"{edge.shape[0]} edge tables for {len(self.edges)} edges")

    @property
    def num_nodes(self) -> int:
        return self.node.shape[0]

    @property
    def num_labels(self) -> int:
        return self.node.shape[1]


@dataclass(frozen=True)
class ExactSummary:
    log_partition: float
    node_marginals: np.ndarray
    edge_marginals: np.ndarray
    map_assignment: tuple[int, ...]
    map_log_prob: float
    entropy: float


@dataclass(frozen=True)
class MomentMatchingReport:
    node_deviation: float
    edge_deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.node_deviation <= self.tol and self.edge_deviation <= self.tol


@dataclass(frozen=True)
class BetheSummary:
    bethe_entropy: float
    expected_score: float

    @property
    def neg_free_energy(self) -> float:
        return self.expected_score + self.bethe_entropy


def build_theta(tau: PseudomarginalSet, eps: float = DEFAULT_EPS) -> ThetaFields:
    """theta_s = log tau_s, theta_st = log(tau_st / (tau_s tau_t)), eps-clamped.

    The clamp keeps the logs finite when trained pseudomarginals approach
    indicators; with exactly consistent tau the edge table of an independent
    pair (tau_st = tau_s x tau_t) vanishes.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    log_node = np.log(np.maximum(tau.node, eps))
    if len(tau.edges) == 0:
        return ThetaFields(node=log_node, edge=tau.edge.copy(), edges=tau.edges)
    src = [e[0] for e in tau.edges]
    dst = [e[1] for e in tau.edges]
    log_edge = (np.log(np.maximum(tau.edge, eps))
                - log_node[src][:, :, None]
                - log_node[dst][:, None, :])
    return ThetaFields(node=log_node, edge=log_edge, edges=tau.edges)


def joint_log_score(theta: ThetaFields, assignment) -> float:
    """Unnormalized log score of one full assignment."""
    y = np.asarray(assignment, dtype=np.intp)
    if y.shape != (theta.num_nodes,):
        raise ValueError(
            f"assignment length {y.shape} does not match {theta.num_nodes} nodes")
    if y.size and (y.min() < 0 or y.max() >= theta.num_labels):
        raise ValueError(f"assignment contains a label outside [0,{theta.num_labels})")
    score = float(theta.node[np.arange(theta.num_nodes), y].sum())
    for e, (s, t) in enumerate(theta.edges):
        score += float(theta.edge[e, y[s], y[t]])
    return score


def _check_cap(num_nodes: int, num_labels: int, max_assignments: int) -> int:
    total = num_labels ** num_nodes
    if total > max_assignments:
        raise OracleInfeasibleError(
            f"oracle infeasible: {num_labels}^{num_nodes} = {total} assignments "
            f"exceeds cap {max_assignments}")
    return total


def assignment_scores(theta: ThetaFields, graph: Graph,
                      max_assignments: int = DEFAULT_ASSIGNMENT_CAP
                      ) -> tuple[np.ndarray, np.ndarray]:
    """All assignments (lexicographic, node 0 most significant) and their scores.

    Returns (digits, scores) with digits of shape (|Y|^N, N). Shared by the
    oracle, the exact sampler, and MAP re-scan tests.
    """
    n, k = theta.num_nodes, theta.num_labels
    if graph.num_nodes != n or graph.edges != theta.edges:
        raise ValueError("theta tables do not match the graph")
    total = _check_cap(n, k, max_assignments)
    idx = np.arange(total, dtype=np.int64)
    digits = np.empty((total, n), dtype=np.int32)
    for s in range(n):
        digits[:, s] = (idx // (k ** (n - 1 - s))) % k
    scores = np.zeros(total)
    for s in range(n):
        scores += theta.node[s, digits[:, s]]
    for e, (s, t) in enumerate(theta.edges):
        scores += theta.edge[e, digits[:, s], digits[:, t]]
    return digits, scores


def exact_summary(theta: ThetaFields, graph: Graph,
                  max_assignments: int = DEFAULT_ASSIGNMENT_CAP) -> ExactSummary:
    """Exact inference by enumeration: log Z, marginals, MAP, entropy.

    MAP ties break toward the lexicographically smallest assignment (argmax
    over lexicographic enumeration returns the first maximizer).
    """
    n, k = theta.num_nodes, theta.num_labels
    digits, scores = assignment_scores(theta, graph, max_assignments)
    log_z = float(logsumexp(scores))
    probs = np.exp(scores - log_z)
    node_marg = np.empty((n, k))
    for s in range(n):
        node_marg[s] = np.bincount(digits[:, s], weights=probs, minlength=k)
    edge_marg = np.empty((len(theta.edges), k, k))
    for e, (s, t) in enumerate(theta.edges):
        flat = np.bincount(digits[:, s].astype(np.int64) * k + digits[:, t],
                           weights=probs, minlength=k * k)
        edge_marg[e] = flat.reshape(k, k)
    best = int(np.argmax(scores))
    return ExactSummary(
        log_partition=log_z,
        node_marginals=node_marg,
        edge_marginals=edge_marg,
        map_assignment=tuple(int(v) for v in digits[best]),
        map_log_prob=float(scores[best] - log_z),
        entropy=float(log_z - probs @ scores),
    )


def check_moment_matching(theta: ThetaFields, graph: Graph, labels, tol: float = 0.05,
                          max_assignments: int = DEFAULT_ASSIGNMENT_CAP
                          ) -> MomentMatchingReport:
    """Max deviation of exact marginals from the gold-label indicators."""
    y = [int(v) for v in labels]
    summary = exact_summary(theta, graph, max_assignments)
    node_ind = np.zeros_like(summary.node_marginals)
    node_ind[np.arange(len(y)), y] = 1.0
    node_dev = float(np.max(np.abs(summary.node_marginals - node_ind))) if y else 0.0
    edge_dev = 0.0
    for e, (s, t) in enumerate(theta.edges):
        ind = np.zeros((theta.num_labels, theta.num_labels))
        ind[y[s], y[t]] = 1.0
        edge_dev = max(edge_dev, float(np.max(np.abs(summary.edge_marginals[e] - ind))))
    return MomentMatchingReport(node_deviation=node_dev, edge_deviation=edge_dev, tol=tol)


def bethe_free_energy(theta: ThetaFields, beliefs, consistency_tol: float = 1e-6
                      ) -> BetheSummary:
    """Bethe entropy, expected score, and their sum at the given beliefs.

    `beliefs` is anything with .node (N, |Y|) and .edge (E, |Y|, |Y|) arrays,
    normalized and edge-consistent within `consistency_tol`. Exact on trees;
    generically an approximation on loopy graphs.
    """
    q_node = np.asarray(beliefs.node, dtype=np.float64)
    q_edge = np.asarray(beliefs.edge, dtype=np.float64)
    if q_node.size and np.max(np.abs(q_node.sum(axis=1) - 1.0)) > consistency_tol:
        raise ValueError("node beliefs are not normalized within tolerance")
    if q_edge.size:
        if np.max(np.abs(q_edge.sum(axis=(1, 2)) - 1.0)) > consistency_tol:
            raise ValueError("edge beliefs are not normalized within tolerance")
        src = [e[0] for e in theta.edges]
        dst = [e[1] for e in theta.edges]
        row_dev = np.max(np.abs(q_edge.sum(axis=2) - q_node[src]))
        col_dev = np.max(np.abs(q_edge.sum(axis=1) - q_node[dst]))
        if max(row_dev, col_dev) > consistency_tol:
            raise ValueError(
                f"edge beliefs inconsistent with node beliefs "
                f"(deviation {max(row_dev, col_dev):.3e} > {consistency_tol:.3e})")

    node_entropy = -float(xlogy(q_node, q_node).sum())
    mutual_info = 0.0
    expected = float((q_node * theta.node).sum())
    for e, (s, t) in enumerate(theta.edges):
        q = q_edge[e]
        outer = np.outer(q_node[s], q_node[t])
        # xlogy zeroes the q log q terms where q == 0; the log outer factor is
        # finite because node beliefs at a sum-product fixed point are positive
        safe_outer = np.maximum(outer, 1e-300)
        mutual_info += float((xlogy(q, q) - q * np.log(safe_outer)).sum())
        expected += float((q * theta.edge[e]).sum())
    return BetheSummary(bethe_entropy=node_entropy - mutual_info, expected_score=expected)
