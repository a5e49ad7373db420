"""Tests for the evaluation metrics."""

import numpy as np
import pytest

from spn.graph import Graph
from spn.metrics import compute_metrics


def labeled_graph(labels):
    n = len(labels)
    return Graph(num_nodes=n, edges=[(i, i + 1) for i in range(n - 1)],
                 features=np.zeros((n, 1)), labels=tuple(labels))


class TestComputeMetrics:
    def test_all_correct(self):
        graphs = [labeled_graph([0, 1]), labeled_graph([2, 0, 1])]
        preds = [g.labels for g in graphs]
        report = compute_metrics(preds, graphs)
        assert report.node_accuracy == 1.0
        assert report.micro_f1 == 1.0
        assert report.graph_accuracy == 1.0

    def test_half_graphs_correct(self):
        graphs = [labeled_graph([0, 1]), labeled_graph([1, 0])]
        preds = [(0, 1), (0, 1)]  # first fully right, second fully wrong
        report = compute_metrics(preds, graphs)
        assert report.node_accuracy == 0.5
        assert report.graph_accuracy == 0.5
        assert report.per_graph[0].all_correct
        assert not report.per_graph[1].all_correct

    def test_matches_naive_recount_oracle(self):
        rng = np.random.default_rng(40)
        graphs = []
        preds = []
        for _ in range(10):
            n = int(rng.integers(1, 9))
            graphs.append(labeled_graph(rng.integers(0, 4, size=n)))
            preds.append(tuple(int(v) for v in rng.integers(0, 4, size=n)))
        report = compute_metrics(preds, graphs)

        # independent recount
        correct = total = full = 0
        for pred, g in zip(preds, graphs):
            match = sum(1 for p, q in zip(pred, g.labels) if p == q)
            correct += match
            total += g.num_nodes
            full += int(match == g.num_nodes)
        assert abs(report.node_accuracy - correct / total) < 1e-12
        assert abs(report.graph_accuracy - full / len(graphs)) < 1e-12

    def test_micro_f1_equals_node_accuracy_single_label(self):
        rng = np.random.default_rng(41)
        for seed in range(10):
            graphs = [labeled_graph(rng.integers(0, 3, size=6)) for _ in range(5)]
            preds = [tuple(int(v) for v in rng.integers(0, 3, size=6))
                     for _ in range(5)]
            report = compute_metrics(preds, graphs)
            assert abs(report.micro_f1 - report.node_accuracy) < 1e-12

    def test_length_mismatches_rejected(self):
        graphs = [labeled_graph([0, 1])]
        with pytest.raises(ValueError, match="prediction"):
            compute_metrics([], graphs)
        with pytest.raises(ValueError, match="predictions for"):
            compute_metrics([(0,)], graphs)

    def test_unlabeled_graph_rejected(self):
        g = Graph(num_nodes=2, edges=[(0, 1)], features=np.zeros((2, 1)))
        with pytest.raises(ValueError, match="gold"):
            compute_metrics([(0, 1)], [g])
