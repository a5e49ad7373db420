"""Evaluation metrics: node accuracy, micro-F1, and graph-level accuracy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .graph import Graph


@dataclass(frozen=True)
class GraphOutcome:
    num_nodes: int
    correct_nodes: int

    @property
    def all_correct(self) -> bool:
        return self.correct_nodes == self.num_nodes


@dataclass(frozen=True)
class MetricsReport:
    node_accuracy: float
    micro_f1: float
    graph_accuracy: float
    per_graph: tuple[GraphOutcome, ...]

    def to_dict(self) -> dict:
        return {
            "node_accuracy": self.node_accuracy,
            "micro_f1": self.micro_f1,
            "graph_accuracy": self.graph_accuracy,
            "per_graph": [
                {"num_nodes": g.num_nodes, "correct_nodes": g.correct_nodes,
                 "all_correct": g.all_correct}
                for g in self.per_graph
            ],
        }


def compute_metrics(predictions: Sequence[Sequence[int]],
                    graphs: Sequence[Graph]) -> MetricsReport:
    """Score predicted labels against gold labels, graph by graph.

    micro_f1 is micro-averaged F1 over per-(node, class) one-vs-rest
    decisions; with single-label multi-class predictions every wrong node
    contributes one false positive and one false negative, so it coincides
    with node accuracy.
    """
    if len(predictions) != len(graphs):
        raise ValueError(
            f"{len(predictions)} prediction lists for {len(graphs)} graphs")
    num_classes = 0
    outcomes = []
    tp: dict[int, int] = {}
    fp: dict[int, int] = {}
    fn: dict[int, int] = {}
    total_nodes = 0
    total_correct = 0
    for i, (pred, graph) in enumerate(zip(predictions, graphs)):
        if graph.labels is None:
            raise ValueError(f"graph {i} has no gold labels")
        if len(pred) != graph.num_nodes:
            raise ValueError(
                f"graph {i}: {len(pred)} predictions for {graph.num_nodes} nodes")
        correct = 0
        for p, g in zip(pred, graph.labels):
            p, g = int(p), int(g)
            num_classes = max(num_classes, p + 1, g + 1)
            if p == g:
                tp[g] = tp.get(g, 0) + 1
                correct += 1
            else:
                fp[p] = fp.get(p, 0) + 1
                fn[g] = fn.get(g, 0) + 1
        outcomes.append(GraphOutcome(num_nodes=graph.num_nodes, correct_nodes=correct))
        total_nodes += graph.num_nodes
        total_correct += correct

    sum_tp = sum(tp.values())
    sum_fp = sum(fp.values())
    sum_fn = sum(fn.values())
    denom = 2 * sum_tp + sum_fp + sum_fn
    micro_f1 = (2 * sum_tp / denom) if denom else 0.0
    node_accuracy = total_correct / total_nodes if total_nodes else 0.0
    # single-label multi-class: every wrong node is one FP and one FN, so
    # micro-F1 must coincide with node accuracy
    assert abs(micro_f1 - node_accuracy) < 1e-12
    return MetricsReport(
        node_accuracy=node_accuracy,
        micro_f1=micro_f1,
        graph_accuracy=(sum(1 for o in outcomes if o.all_correct) / len(outcomes)
                        if outcomes else 0.0),
        per_graph=tuple(outcomes),
    )
