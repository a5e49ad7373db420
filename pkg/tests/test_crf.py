"""Tests for potential assembly, the enumeration oracle, and Bethe quantities."""

import numpy as np
import pytest

from spn.bp import BeliefSet
from spn.crf import (OracleInfeasibleError, ThetaFields, assignment_scores,
                     bethe_free_energy, build_theta, check_moment_matching,
                     exact_summary, joint_log_score)
from spn.graph import Graph
from spn.models import PseudomarginalSet
from spn.verification import oracle_consistent_tau, random_graph, random_theta


def bare_graph(n, edges):
    return Graph(num_nodes=n, edges=edges, features=np.zeros((n, 1)))


def smoothed_indicator_tau(graph, labels, k, eps):
    node = np.full((graph.num_nodes, k), eps / (k - 1))
    node[np.arange(graph.num_nodes), labels] = 1.0 - eps
    edge = np.full((graph.num_edges, k, k), eps / (k * k - 1))
    for e, (s, t) in enumerate(graph.edges):
        edge[e, labels[s], labels[t]] = 1.0 - eps
    return PseudomarginalSet(node=node, edge=edge, edges=graph.edges)


class TestBuildTheta:
    def test_uniform_tau_kills_edge_potential(self):
        g = bare_graph(2, [(0, 1)])
        tau = PseudomarginalSet(node=np.full((2, 2), 0.5),
                                edge=np.full((1, 2, 2), 0.25), edges=g.edges)
        theta = build_theta(tau)
        np.testing.assert_allclose(theta.node, np.log(0.5), atol=1e-15)
        np.testing.assert_allclose(theta.edge, 0.0, atol=1e-12)

    def test_outer_product_tau_kills_edge_potential(self):
        rng = np.random.default_rng(2)
        g = bare_graph(3, [(0, 1), (1, 2)])
        node = rng.dirichlet(np.ones(3), size=3)
        edge = np.stack([np.outer(node[s], node[t]) for s, t in g.edges])
        theta = build_theta(PseudomarginalSet(node=node, edge=edge, edges=g.edges))
        np.testing.assert_allclose(theta.edge, 0.0, atol=1e-10)

    def test_outer_product_tau_decouples_marginals(self):
        # with vanished edge potentials the joint factorizes and the exact
        # node marginals are tau_s itself
        rng = np.random.default_rng(3)
        g = random_graph(rng, 6, 3, labeled=False)
        node = rng.dirichlet(np.ones(3), size=6)
        edge = np.stack([np.outer(node[s], node[t]) for s, t in g.edges])
        theta = build_theta(PseudomarginalSet(node=node, edge=edge, edges=g.edges))
        summary = exact_summary(theta, g)
        np.testing.assert_allclose(summary.node_marginals, node, atol=1e-10)

    def test_near_consistent_tau_gives_nearby_marginals(self):
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(50):
            g = bare_graph(3, [(0, 1), (1, 2), (0, 2)])
            k = int(rng.choice([2, 3]))
            tau = oracle_consistent_tau(random_theta(rng, g, k, scale=0.8), g)
            summary = exact_summary(build_theta(tau), g)
            worst = max(worst, float(np.max(np.abs(summary.node_marginals - tau.node))))
        assert worst < 0.05

    def test_eps_clamp_keeps_theta_finite(self):
        g = bare_graph(2, [(0, 1)])
        node = np.array([[1.0 - 1e-300, 1e-300], [0.5, 0.5]])
        edge = np.full((1, 2, 2), 1e-300)
        edge[0, 0, 0] = 1.0 - 3e-300
        tau = PseudomarginalSet(node=node, edge=edge, edges=g.edges)
        theta = build_theta(tau, eps=1e-8)
        assert np.all(np.isfinite(theta.node)) and np.all(np.isfinite(theta.edge))


class TestJointLogScore:
    def test_zero_theta_scores_zero(self):
        g = bare_graph(3, [(0, 1), (1, 2)])
        theta = ThetaFields(node=np.zeros((3, 2)), edge=np.zeros((2, 2, 2)),
                            edges=g.edges)
        for assignment in ([0, 0, 0], [1, 0, 1], [1, 1, 1]):
            assert joint_log_score(theta, assignment) == 0.0

    def test_single_node(self):
        theta = ThetaFields(node=np.array([[1.0, 2.0]]), edge=np.zeros((0, 2, 2)),
                            edges=())
        assert joint_log_score(theta, [1]) == 2.0

    def test_matches_term_by_term_oracle(self):
        rng = np.random.default_rng(21)
        g = bare_graph(3, [(0, 1), (1, 2), (0, 2)])
        theta = random_theta(rng, g, 3)
        for _ in range(10):
            y = rng.integers(0, 3, size=3)
            expected = 0.0
            for s in range(3):
                expected += theta.node[s, y[s]]
            for e, (s, t) in enumerate(g.edges):
                expected += theta.edge[e, y[s], y[t]]
            assert abs(joint_log_score(theta, y) - expected) < 1e-12

    def test_label_out_of_range(self):
        theta = ThetaFields(node=np.zeros((2, 2)), edge=np.zeros((1, 2, 2)),
                            edges=((0, 1),))
        with pytest.raises(ValueError, match="label"):
            joint_log_score(theta, [0, 2])


class TestExactSummary:
    def test_zero_theta_uniform(self):
        n, k = 4, 3
        g = bare_graph(n, [(0, 1), (1, 2), (2, 3)])
        theta = ThetaFields(node=np.zeros((n, k)), edge=np.zeros((3, k, k)),
                            edges=g.edges)
        s = exact_summary(theta, g)
        assert abs(s.log_partition - n * np.log(k)) < 1e-10
        np.testing.assert_allclose(s.node_marginals, 1 / k, atol=1e-12)
        assert abs(s.entropy - n * np.log(k)) < 1e-10
        assert s.map_assignment == (0, 0, 0, 0)  # lexicographic tie-break

    def test_single_node(self):
        g = bare_graph(1, [])
        theta = ThetaFields(node=np.zeros((1, 2)), edge=np.zeros((0, 2, 2)), edges=())
        s = exact_summary(theta, g)
        np.testing.assert_allclose(s.node_marginals, [[0.5, 0.5]], atol=1e-15)
        assert abs(s.log_partition - np.log(2)) < 1e-12

    def test_two_node_closed_form(self):
        # theta zero except theta_st(0,0)=1: p((0,0)) = e/(e+3)
        g = bare_graph(2, [(0, 1)])
        edge = np.zeros((1, 2, 2))
        edge[0, 0, 0] = 1.0
        theta = ThetaFields(node=np.zeros((2, 2)), edge=edge, edges=g.edges)
        s = exact_summary(theta, g)
        p00 = np.e / (np.e + 3.0)
        assert abs(np.exp(joint_log_score(theta, [0, 0]) - s.log_partition) - p00) < 1e-12
        expected_node = np.array([[p00 + (1 - p00) / 3, 2 * (1 - p00) / 3]] * 2)
        np.testing.assert_allclose(s.node_marginals, expected_node, atol=1e-12)
        assert s.map_assignment == (0, 0)

    def test_probabilities_normalize(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            g = random_graph(rng, int(rng.integers(2, 8)), 3, labeled=False)
            theta = random_theta(rng, g, 3, scale=2.0)
            s = exact_summary(theta, g)
            digits, scores = assignment_scores(theta, g)
            total = np.exp(scores - s.log_partition).sum()
            assert abs(total - 1.0) < 1e-9

    def test_marginal_consistency(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            g = random_graph(rng, int(rng.integers(3, 8)), 2, labeled=False)
            theta = random_theta(rng, g, 2, scale=1.5)
            s = exact_summary(theta, g)
            for e, (a, b) in enumerate(g.edges):
                np.testing.assert_allclose(s.edge_marginals[e].sum(axis=1),
                                           s.node_marginals[a], atol=1e-10)
                np.testing.assert_allclose(s.edge_marginals[e].sum(axis=0),
                                           s.node_marginals[b], atol=1e-10)

    def test_map_attains_maximum_by_rescan(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            g = random_graph(rng, 6, 3, labeled=False)
            theta = random_theta(rng, g, 3)
            s = exact_summary(theta, g)
            _, scores = assignment_scores(theta, g)
            assert abs(joint_log_score(theta, s.map_assignment) - scores.max()) < 1e-12

    def test_cap_enforced(self):
        g = bare_graph(25, [(i, i + 1) for i in range(24)])
        theta = ThetaFields(node=np.zeros((25, 2)), edge=np.zeros((24, 2, 2)),
                            edges=g.edges)
        with pytest.raises(OracleInfeasibleError, match="oracle infeasible"):
            exact_summary(theta, g)

    def test_entropy_matches_direct_formula(self):
        rng = np.random.default_rng(8)
        g = random_graph(rng, 5, 2, labeled=False)
        theta = random_theta(rng, g, 2)
        s = exact_summary(theta, g)
        _, scores = assignment_scores(theta, g)
        p = np.exp(scores - s.log_partition)
        direct = -(p * np.log(p)).sum()
        assert abs(s.entropy - direct) < 1e-9


class TestMomentMatching:
    def test_smoothed_indicators_converge(self):
        g = bare_graph(2, [(0, 1)])
        labels = (0, 1)
        devs = []
        for eps in (1e-2, 1e-3, 1e-4):
            theta = build_theta(smoothed_indicator_tau(g, labels, 2, eps))
            report = check_moment_matching(theta, g, labels, tol=1.0)
            devs.append(max(report.node_deviation, report.edge_deviation))
        assert devs[0] > devs[1] > devs[2]
        assert devs[2] < 1e-2

    def test_zero_theta_half_deviation(self):
        g = bare_graph(3, [(0, 1), (1, 2)])
        theta = ThetaFields(node=np.zeros((3, 2)), edge=np.zeros((2, 2, 2)),
                            edges=g.edges)
        report = check_moment_matching(theta, g, (0, 1, 0), tol=0.4)
        assert abs(report.node_deviation - 0.5) < 1e-12
        assert not report.passed


class TestBethe:
    def test_edgeless_uniform_beliefs(self):
        g = bare_graph(2, [])
        theta = ThetaFields(node=np.zeros((2, 2)), edge=np.zeros((0, 2, 2)), edges=())
        beliefs = BeliefSet(node=np.full((2, 2), 0.5), edge=np.zeros((0, 2, 2)))
        out = bethe_free_energy(theta, beliefs)
        assert abs(out.bethe_entropy - 2 * np.log(2)) < 1e-12
        assert abs(out.expected_score) < 1e-12
        assert abs(out.neg_free_energy - out.bethe_entropy) < 1e-12

    def test_exact_on_two_node_tree(self):
        rng = np.random.default_rng(9)
        g = bare_graph(2, [(0, 1)])
        theta = random_theta(rng, g, 3)
        summary = exact_summary(theta, g)
        beliefs = BeliefSet(node=summary.node_marginals, edge=summary.edge_marginals)
        out = bethe_free_energy(theta, beliefs)
        assert abs(out.bethe_entropy - summary.entropy) < 1e-8
        # and -F equals log Z on a tree at the exact marginals
        assert abs(out.neg_free_energy - summary.log_partition) < 1e-8

    def test_inexact_on_cycle(self):
        rng = np.random.default_rng(10)
        g = bare_graph(3, [(0, 1), (1, 2), (0, 2)])
        theta = random_theta(rng, g, 2, scale=1.5)
        summary = exact_summary(theta, g)
        beliefs = BeliefSet(node=summary.node_marginals, edge=summary.edge_marginals)
        out = bethe_free_energy(theta, beliefs)
        assert abs(out.bethe_entropy - summary.entropy) > 1e-6

    def test_inconsistent_beliefs_rejected(self):
        g = bare_graph(2, [(0, 1)])
        theta = ThetaFields(node=np.zeros((2, 2)), edge=np.zeros((1, 2, 2)),
                            edges=g.edges)
        node = np.array([[0.9, 0.1], [0.5, 0.5]])
        edge = np.full((1, 2, 2), 0.25)  # implies uniform node marginals
        with pytest.raises(ValueError, match="inconsistent"):
            bethe_free_energy(theta, BeliefSet(node=node, edge=edge))
