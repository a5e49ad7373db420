"""Loopy belief propagation: sum-product and max-product, plus decoding.

Message indexing: canonical edge e = (s, t) with s < t owns two directed
messages, stored at rows 2e (s -> t, received by t) and 2e+1 (t -> s,
received by s) of a (2E, |Y|) array. Messages live in probability space
(each normalized to sum 1); all combination is done in log space, so
potentials with entries up to +-50 neither overflow nor produce NaNs.

The update for the message into s from t is

    m_{t->s}(y_s) proportional to
        combine_{y_t} exp(theta_t(y_t) + theta_st(y_s, y_t))
            * prod_{s' in N(t) \\ s} m_{s'->t}(y_t)

with combine = sum (sum-product) or max (max-product). Node and edge beliefs
are recovered from theta and the converged messages; decoding takes the
per-node argmax of theta_s plus incoming messages, ties toward the smallest
label index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .crf import ThetaFields, build_theta
from .graph import Graph

BP_MODES = ("sum", "max")
BP_SCHEDULES = ("synchronous", "round_robin")


@dataclass(frozen=True)
class BPConfig:
    mode: str = "max"
    max_iters: int = 50
    tol: float = 1e-6
    damping: float = 0.0
    schedule: str = "round_robin"
    init: str = "uniform"

    def __post_init__(self):
        if self.mode not in BP_MODES:
            raise ValueError(f"mode must be one of {BP_MODES}, got '{self.mode}'")
        if self.schedule not in BP_SCHEDULES:
            raise ValueError(
                f"schedule must be one of {BP_SCHEDULES}, got '{self.schedule}'")
        if self.init != "uniform":
            raise ValueError(f"unsupported init '{self.init}'")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not (0.0 <= self.damping < 1.0):
            raise ValueError("damping must lie in [0, 1)")


@dataclass(frozen=True)
class MessageSet:
    """Directed-edge messages in probability space, rows as documented above."""

    values: np.ndarray
    edges: tuple[tuple[int, int], ...]

    def incoming(self, num_nodes: int) -> np.ndarray:
        """(N, |Y|) sums of log messages received by each node."""
        sums = np.zeros((num_nodes, self.values.shape[1]))
        if self.values.size:
            log_m = np.log(self.values)
            for e, (s, t) in enumerate(self.edges):
                sums[t] += log_m[2 * e]
                sums[s] += log_m[2 * e + 1]
        return sums


@dataclass(frozen=True)
class BeliefSet:
    node: np.ndarray
    edge: np.ndarray


@dataclass(frozen=True)
class BPResult:
    messages: MessageSet
    beliefs: BeliefSet
    converged: bool
    iters: int


@dataclass(frozen=True)
class InferenceResult:
    labels: tuple[int, ...]
    node_beliefs: np.ndarray
    converged: bool = True
    iters: int = 0


class _DirectedIndex:
    """Precomputed per-directed-edge arrays for the update loop."""

    def __init__(self, theta: ThetaFields):
        edges = theta.edges
        m = len(edges)
        self.sender = np.empty(2 * m, dtype=np.intp)
        self.receiver = np.empty(2 * m, dtype=np.intp)
        k = theta.num_labels
        # oriented[d][receiver_label, sender_label]
        self.oriented = np.empty((2 * m, k, k))
        for e, (s, t) in enumerate(edges):
            self.sender[2 * e], self.receiver[2 * e] = s, t
            self.sender[2 * e + 1], self.receiver[2 * e + 1] = t, s
            self.oriented[2 * e] = theta.edge[e].T
            self.oriented[2 * e + 1] = theta.edge[e]
        self.rev = np.arange(2 * m, dtype=np.intp) ^ 1


def _combine(arr: np.ndarray, axis: int, mode: str) -> np.ndarray:
    return logsumexp(arr, axis=axis) if mode == "sum" else arr.max(axis=axis)


def run_bp(theta: ThetaFields, graph: Graph, config: BPConfig = BPConfig()) -> BPResult:
    """Run loopy BP until the max message change drops below config.tol.

    Non-convergence within max_iters is reported via the flag; beliefs are
    still returned. Damped updates mix in probability space:
    new = (1 - damping) * update + damping * old.
    """
    if graph.num_nodes != theta.num_nodes or graph.edges != theta.edges:
        raise ValueError("theta tables do not match the graph")
    n, k = theta.num_nodes, theta.num_labels
    m = len(theta.edges)

    if m == 0:
        shifted = theta.node - theta.node.max(axis=1, keepdims=True)
        q = np.exp(shifted)
        q /= q.sum(axis=1, keepdims=True)
        return BPResult(
            messages=MessageSet(values=np.zeros((0, k)), edges=()),
            beliefs=BeliefSet(node=q, edge=np.zeros((0, k, k))),
            converged=True, iters=0)

    idx = _DirectedIndex(theta)
    log_m = np.full((2 * m, k), -np.log(k))
    node_sum = np.zeros((n, k))
    np.add.at(node_sum, idx.receiver, log_m)
    lam = config.damping

    converged = False
    iters = 0
    for _ in range(config.max_iters):
        iters += 1
        if config.schedule == "synchronous":
            ctx = theta.node[idx.sender] + node_sum[idx.sender] - log_m[idx.rev]
            new_log = _combine(idx.oriented + ctx[:, None, :], 2, config.mode)
            new_log -= logsumexp(new_log, axis=1, keepdims=True)
            p_old = np.exp(log_m)
            # at lam = 0 this is bitwise the undamped update (x + 0.0 == x
            # for the strictly positive messages involved)
            p_new = (1.0 - lam) * np.exp(new_log) + lam * p_old
            change = float(np.max(np.abs(p_new - p_old)))
            log_m = np.log(p_new)
            node_sum = np.zeros((n, k))
            np.add.at(node_sum, idx.receiver, log_m)
        else:  # round_robin over the fixed directed-edge order
            change = 0.0
            for d in range(2 * m):
                snd, rcv = idx.sender[d], idx.receiver[d]
                ctx = theta.node[snd] + node_sum[snd] - log_m[idx.rev[d]]
                vec = _combine(idx.oriented[d] + ctx[None, :], 1, config.mode)
                vec -= logsumexp(vec)
                p_old = np.exp(log_m[d])
                p_new = (1.0 - lam) * np.exp(vec) + lam * p_old
                change = max(change, float(np.max(np.abs(p_new - p_old))))
                new_log = np.log(p_new)
                node_sum[rcv] += new_log - log_m[d]
                log_m[d] = new_log
        if change <= config.tol:
            converged = True
            break

    assert np.all(np.isfinite(log_m)), "BP produced non-finite messages"

    # beliefs per the recovery rules: q_s from theta_s plus all incoming
    # messages; q_st from both endpoint contexts excluding the shared edge
    log_q = theta.node + node_sum
    log_q -= logsumexp(log_q, axis=1, keepdims=True)
    q_node = np.exp(log_q)

    src = idx.sender[0::2]
    dst = idx.receiver[0::2]
    ctx_s = theta.node[src] + node_sum[src] - log_m[1::2]
    ctx_t = theta.node[dst] + node_sum[dst] - log_m[0::2]
    log_q_edge = theta.edge + ctx_s[:, :, None] + ctx_t[:, None, :]
    log_q_edge -= logsumexp(log_q_edge.reshape(m, k * k), axis=1)[:, None, None]
    q_edge = np.exp(log_q_edge)
    assert np.all(np.isfinite(q_node)) and np.all(np.isfinite(q_edge))

    return BPResult(
        messages=MessageSet(values=np.exp(log_m), edges=theta.edges),
        beliefs=BeliefSet(node=q_node, edge=q_edge),
        converged=converged, iters=iters)


def decode(theta: ThetaFields, messages: MessageSet, graph: Graph) -> tuple[int, ...]:
    """Per-node argmax of theta_s plus incoming log messages.

    Ties break toward the smallest label index (argmax returns the first
    maximizer).
    """
    scores = theta.node + messages.incoming(graph.num_nodes)
    return tuple(int(v) for v in np.argmax(scores, axis=1))


def infer_graph(models, graph: Graph, config: BPConfig = BPConfig()) -> InferenceResult:
    """Full inference pipeline: pseudomarginals (gamma applied) -> theta -> BP -> decode."""
    tau = models.pseudomarginals(graph, apply_temperature=True)
    theta = build_theta(tau)
    result = run_bp(theta, graph, config)
    labels = decode(theta, result.messages, graph)
    return InferenceResult(labels=labels, node_beliefs=result.beliefs.node,
                           converged=result.converged, iters=result.iters)
