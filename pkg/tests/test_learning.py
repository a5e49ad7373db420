"""Tests for the training objectives and loops."""

import numpy as np
import pytest

from spn import tensor as T
from spn.bp import BeliefSet, BPConfig, run_bp
from spn.crf import build_theta, check_moment_matching
from spn.graph import Dataset, Graph, LabelSpace
from spn.learning import (TrainConfig, consistency_penalty, make_optimizers,
                          model_theta_tensors, proxy_loss, proxy_loss_parts,
                          pseudolikelihood_loss, refine, refine_step,
                          refinement_objective, train_maximin, train_node_only,
                          train_proxy, train_pseudolikelihood)
from spn.models import EncoderConfig, MarginalModels, PseudomarginalSet
from spn.verification import finite_difference_check, random_graph, small_models


def tiny_dataset(rng, num_graphs=4, n=5, k=2, feature_dim=3):
    graphs = tuple(random_graph(rng, n, k, feature_dim=feature_dim)
                   for _ in range(num_graphs))
    return Dataset(label_space=LabelSpace(size=k), feature_dim=feature_dim,
                   splits={"train": graphs})


def zeroed(models):
    for p in models.parameters():
        p.values = np.zeros_like(p.values)
    return models


class TestProxyLoss:
    def test_uniform_closed_form(self):
        g = Graph(num_nodes=3, edges=[(0, 1), (1, 2), (0, 2)],
                  features=np.random.default_rng(0).normal(size=(3, 2)),
                  labels=(0, 1, 2))
        models = zeroed(MarginalModels(feature_dim=2, num_labels=3, seed=0))
        loss = proxy_loss(models, g)
        expected = 3 * np.log(3) + 3 * np.log(9)
        assert abs(float(loss.values) - expected) < 1e-10

    def test_single_node_near_indicator(self):
        g = Graph(num_nodes=1, edges=[], features=np.ones((1, 2)), labels=(0,))
        models = zeroed(MarginalModels(feature_dim=2, num_labels=2, seed=0))
        eps = 1e-3
        # drive the node head bias so tau(gold) = 1 - eps
        models.node_b.values = np.array([np.log(1.0 - eps), np.log(eps)])
        loss = proxy_loss(models, g)
        assert abs(float(loss.values) + np.log(1.0 - eps)) < 1e-12

    def test_missing_labels_rejected(self):
        g = Graph(num_nodes=2, edges=[(0, 1)], features=np.zeros((2, 2)))
        models = MarginalModels(feature_dim=2, num_labels=2, seed=0)
        with pytest.raises(ValueError, match="labels"):
            proxy_loss(models, g)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(31)
        g = random_graph(rng, 3, 2, feature_dim=3)
        models = small_models(5, 3, 2, hidden=4)
        ok, worst = finite_difference_check(lambda: proxy_loss(models, g),
                                            models.parameters())
        assert ok, f"worst rel error {worst}"


class TestConsistencyPenalty:
    def test_outer_product_tau_is_exactly_consistent(self):
        rng = np.random.default_rng(1)
        g = Graph(num_nodes=3, edges=[(0, 1), (1, 2)], features=np.zeros((3, 1)))
        node = rng.dirichlet(np.ones(3), size=3)
        edge = np.stack([np.outer(node[s], node[t]) for s, t in g.edges])
        pen = consistency_penalty(
            PseudomarginalSet(node=node, edge=edge, edges=g.edges), g)
        assert abs(float(pen.values)) < 1e-24

    def test_forced_arithmetic(self):
        # single edge, |Y|=2, tau_s = tau_t = [1,0] (as near as normalization
        # allows), uniform table: penalty = 2*((0.5-1)^2 + (0.5-0)^2) = 1
        g = Graph(num_nodes=2, edges=[(0, 1)], features=np.zeros((2, 1)))
        tiny = 1e-12
        node = np.array([[1.0 - tiny, tiny], [1.0 - tiny, tiny]])
        edge = np.full((1, 2, 2), 0.25)
        pen = consistency_penalty(
            PseudomarginalSet(node=node, edge=edge, edges=g.edges), g)
        assert abs(float(pen.values) - 1.0) < 1e-9

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(2)
        g = random_graph(rng, 5, 3, labeled=False)
        node = rng.dirichlet(np.ones(3), size=5)
        edge = rng.dirichlet(np.ones(9), size=g.num_edges).reshape(-1, 3, 3)
        tau = PseudomarginalSet(node=node, edge=edge, edges=g.edges)
        expected = 0.0
        for e, (s, t) in enumerate(g.edges):
            for yt in range(3):
                expected += (edge[e][:, yt].sum() - node[t][yt]) ** 2
            for ys in range(3):
                expected += (edge[e][ys, :].sum() - node[s][ys]) ** 2
        assert abs(float(consistency_penalty(tau, g).values) - expected) < 1e-12

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        g = random_graph(rng, 4, 2, feature_dim=3)
        models = small_models(7, 3, 2, hidden=4)
        ok, worst = finite_difference_check(
            lambda: consistency_penalty(
                (models.node_tau(g), models.edge_tau(g)), g),
            models.parameters())
        assert ok, f"worst rel error {worst}"


class TestPseudolikelihood:
    def test_edgeless_equals_node_proxy_term(self):
        rng = np.random.default_rng(4)
        g = Graph(num_nodes=4, edges=[], features=rng.normal(size=(4, 3)),
                  labels=(0, 1, 0, 1))
        models = small_models(9, 3, 2)
        node_term, _ = proxy_loss_parts(models, g)
        pl = pseudolikelihood_loss(models, g)
        assert abs(float(pl.values) - float(node_term.values)) < 1e-12

    def test_uniform_closed_form(self):
        g = Graph(num_nodes=3, edges=[(0, 1), (1, 2)],
                  features=np.zeros((3, 2)), labels=(0, 1, 2))
        models = zeroed(MarginalModels(feature_dim=2, num_labels=3, seed=0))
        pl = pseudolikelihood_loss(models, g)
        assert abs(float(pl.values) - 3 * np.log(3)) < 1e-10

    def test_matches_conditional_enumeration_oracle(self):
        rng = np.random.default_rng(5)
        g = Graph(num_nodes=3, edges=[(0, 1), (1, 2), (0, 2)],
                  features=rng.normal(size=(3, 3)), labels=(1, 0, 1))
        models = small_models(11, 3, 2)
        k = 2
        # oracle: build theta tables in numpy, enumerate each conditional
        node_log_tau = models.node_log_tau(g).values
        edge_log_tau = models.edge_log_tau(g).values.reshape(g.num_edges, k, k)
        theta_node = node_log_tau
        theta_edge = np.empty_like(edge_log_tau)
        for e, (s, t) in enumerate(g.edges):
            theta_edge[e] = (edge_log_tau[e] - node_log_tau[s][:, None]
                             - node_log_tau[t][None, :])
        y = g.labels
        expected = 0.0
        for s in range(g.num_nodes):
            logits = theta_node[s].copy()
            for e, (a, b) in enumerate(g.edges):
                if a == s:
                    logits += theta_edge[e][:, y[b]]
                elif b == s:
                    logits += theta_edge[e][y[a], :]
            logits -= np.log(np.exp(logits - logits.max()).sum()) + logits.max()
            expected -= logits[y[s]]
        got = float(pseudolikelihood_loss(models, g).values)
        assert abs(got - expected) < 1e-10

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        g = random_graph(rng, 4, 2, feature_dim=3)
        models = small_models(13, 3, 2, hidden=4)
        ok, worst = finite_difference_check(
            lambda: pseudolikelihood_loss(models, g), models.parameters())
        assert ok, f"worst rel error {worst}"


class TestRefinement:
    def test_gradient_identity_indicator_minus_belief(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            k = int(rng.choice([2, 3]))
            g = random_graph(rng, int(rng.integers(3, 7)), k)
            from spn.verification import random_theta
            theta = random_theta(rng, g, k)
            beliefs = run_bp(theta, g, BPConfig(mode="sum", max_iters=200,
                                                tol=1e-12)).beliefs
            theta_node = T.parameter(theta.node.copy())
            theta_edge = T.parameter(theta.edge.reshape(g.num_edges, k * k).copy())
            grads = T.backward(refinement_objective(theta_node, theta_edge, g,
                                                    g.labels, beliefs))
            y = np.asarray(g.labels)
            ind = np.zeros((g.num_nodes, k))
            ind[np.arange(g.num_nodes), y] = 1.0
            np.testing.assert_allclose(grads[theta_node], ind - beliefs.node,
                                       atol=1e-10)
            ind_e = np.zeros((g.num_edges, k * k))
            for e, (s, t) in enumerate(g.edges):
                ind_e[e, y[s] * k + y[t]] = 1.0
            np.testing.assert_allclose(
                grads[theta_edge],
                ind_e - beliefs.edge.reshape(g.num_edges, k * k), atol=1e-10)

    def test_single_node_closed_form(self):
        g = Graph(num_nodes=1, edges=[], features=np.zeros((1, 1)), labels=(0,))
        theta_node = T.parameter(np.zeros((1, 2)))
        theta_edge = T.parameter(np.zeros((0, 4)))
        beliefs = BeliefSet(node=np.array([[0.5, 0.5]]), edge=np.zeros((0, 2, 2)))
        grads = T.backward(refinement_objective(theta_node, theta_edge, g,
                                                (0,), beliefs))
        np.testing.assert_allclose(grads[theta_node], [[0.5, -0.5]], atol=1e-15)

    def test_stationary_when_beliefs_are_indicators(self):
        g = Graph(num_nodes=2, edges=[(0, 1)], features=np.zeros((2, 1)),
                  labels=(0, 1))
        theta_node = T.parameter(np.random.default_rng(8).normal(size=(2, 2)))
        theta_edge = T.parameter(np.random.default_rng(9).normal(size=(1, 4)))
        ind_node = np.array([[1.0, 0.0], [0.0, 1.0]])
        ind_edge = np.zeros((1, 2, 2))
        ind_edge[0, 0, 1] = 1.0
        beliefs = BeliefSet(node=ind_node, edge=ind_edge)
        obj = refinement_objective(theta_node, theta_edge, g, g.labels, beliefs)
        grads = T.backward(obj)
        assert np.max(np.abs(grads[theta_node])) < 1e-15
        assert np.max(np.abs(grads[theta_edge])) < 1e-15
        # Adam with exactly zero gradient applies a zero update
        opt = T.Adam([theta_node, theta_edge], lr=0.1)
        before = theta_node.values.copy()
        opt.step(grads)
        np.testing.assert_array_equal(theta_node.values, before)

    def test_objective_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        g = random_graph(rng, 4, 2, feature_dim=3)
        models = small_models(15, 3, 2, hidden=4)
        theta = build_theta(models.pseudomarginals(g))
        beliefs = run_bp(theta, g, BPConfig(mode="sum", max_iters=100,
                                            tol=1e-10)).beliefs

        def objective():
            tn, te = model_theta_tensors(models, g)
            return refinement_objective(tn, te, g, g.labels, beliefs)

        ok, worst = finite_difference_check(objective, models.parameters())
        assert ok, f"worst rel error {worst}"

    def test_refine_step_requires_sum_mode(self):
        rng = np.random.default_rng(11)
        g = random_graph(rng, 3, 2, feature_dim=3)
        models = small_models(17, 3, 2)
        node_opt, edge_opt = make_optimizers(models, 1e-3, 1e-3)
        with pytest.raises(ValueError, match="sum"):
            refine_step(models, g, g.labels, BPConfig(mode="max"),
                        node_opt, edge_opt)


class TestTrainProxy:
    def test_two_node_edge_reaches_indicators(self):
        g = Graph(num_nodes=2, edges=[(0, 1)],
                  features=np.array([[1.0, 0.0], [0.0, 1.0]]), labels=(0, 1))
        ds = Dataset(label_space=LabelSpace(size=2), feature_dim=2,
                     splits={"train": (g,)})
        models = MarginalModels(
            feature_dim=2, num_labels=2,
            encoder=EncoderConfig(num_layers=1, hidden_dim=8, seed=0), seed=0)
        report = train_proxy(models, ds,
                             TrainConfig(epochs=500, node_lr=5e-2, edge_lr=5e-2))
        assert report.epoch_node_loss[-1] < 0.01
        assert report.epoch_edge_loss[-1] < 0.01

    def test_zero_epochs_changes_nothing(self):
        rng = np.random.default_rng(12)
        ds = tiny_dataset(rng)
        models = small_models(19, 3, 2)
        before = {p.name: p.values.copy() for p in models.parameters()}
        report = train_proxy(models, ds, TrainConfig(epochs=0))
        assert report.epoch_node_loss == []
        for p in models.parameters():
            np.testing.assert_array_equal(p.values, before[p.name])

    def test_alpha_suppresses_penalty_mid_training(self):
        rng = np.random.default_rng(1)
        ds = tiny_dataset(rng)

        def run(alpha):
            models = small_models(1, 3, 2, hidden=8)
            return train_proxy(models, ds,
                               TrainConfig(epochs=50, node_lr=1e-2,
                                           edge_lr=1e-2, alpha=alpha))

        assert run(10.0).epoch_penalty[-1] <= run(0.0).epoch_penalty[-1]

    def test_penalty_falls_without_being_optimized(self):
        # the consistency constraint is approached with alpha = 0
        rng = np.random.default_rng(13)
        ds = tiny_dataset(rng, num_graphs=1, n=4)
        models = small_models(21, 3, 2, hidden=8)
        report = train_proxy(models, ds,
                             TrainConfig(epochs=600, node_lr=2e-2, edge_lr=2e-2))
        assert report.epoch_penalty[-1] < 1e-3

    def test_trained_model_moment_matches(self):
        rng = np.random.default_rng(14)
        ds = tiny_dataset(rng, num_graphs=1, n=4, k=2)
        models = small_models(23, 3, 2, hidden=8)
        train_proxy(models, ds, TrainConfig(epochs=800, node_lr=2e-2, edge_lr=2e-2))
        g = ds.split("train")[0]
        theta = build_theta(models.pseudomarginals(g))
        report = check_moment_matching(theta, g, g.labels, tol=0.05)
        assert report.passed, (report.node_deviation, report.edge_deviation)

    def test_determinism_of_reports(self):
        rng = np.random.default_rng(15)
        ds = tiny_dataset(rng)

        def run():
            models = small_models(25, 3, 2)
            return train_proxy(models, ds,
                               TrainConfig(epochs=30, node_lr=1e-2, edge_lr=1e-2))

        assert run().core() == run().core()


class TestBaselines:
    def test_maximin_recovers_tiny_dataset_but_noisier(self):
        rng = np.random.default_rng(16)
        ds = tiny_dataset(rng)
        bp = BPConfig(mode="sum", max_iters=50, tol=1e-8)
        maximin_models = small_models(27, 3, 2, hidden=8)
        rep_mm = train_maximin(maximin_models, ds,
                               TrainConfig(epochs=60, node_lr=1e-2, edge_lr=1e-2,
                                           bp=bp))
        proxy_models = small_models(27, 3, 2, hidden=8)
        train_proxy(proxy_models, ds,
                    TrainConfig(epochs=300, node_lr=1e-2, edge_lr=1e-2))
        rep_ref = refine(proxy_models, ds,
                         TrainConfig(epochs=0, refine_epochs=60, refine_lr=1e-5,
                                     bp=bp))
        # maximin from scratch moves the objective in much larger, noisier steps
        assert np.var(np.diff(rep_mm.objectives)) > np.var(np.diff(rep_ref.objectives))

    def test_pseudolikelihood_training_runs_and_descends(self):
        rng = np.random.default_rng(17)
        ds = tiny_dataset(rng)
        models = small_models(29, 3, 2, hidden=8)
        report = train_pseudolikelihood(
            models, ds, TrainConfig(epochs=80, node_lr=1e-2, edge_lr=1e-2))
        assert report.epoch_node_loss[-1] < report.epoch_node_loss[0]

    def test_node_only_never_builds_edge_potentials(self):
        rng = np.random.default_rng(18)
        ds = tiny_dataset(rng)
        models = small_models(31, 3, 2, hidden=8)
        report = train_node_only(models, ds,
                                 TrainConfig(epochs=40, node_lr=1e-2, edge_lr=1e-2))
        assert models.edge_forward_count == 0
        assert "train" in report.metrics

    def test_refine_after_proxy_stays_near_stationary(self):
        # post-proxy the game objective is already close to its stationary
        # value; refinement steps stay small (coordinate descent on a game is
        # not monotone, so only nearness is asserted)
        rng = np.random.default_rng(19)
        ds = tiny_dataset(rng, num_graphs=2)
        models = small_models(33, 3, 2, hidden=8)
        train_proxy(models, ds, TrainConfig(epochs=200, node_lr=1e-2, edge_lr=1e-2))
        rep = refine(models, ds, TrainConfig(refine_epochs=25, refine_lr=1e-4,
                                             bp=BPConfig(mode="sum", max_iters=50,
                                                         tol=1e-8)))
        assert len(rep.objectives) == 25
        assert len(rep.bp_converged) == 25
        assert np.max(np.abs(rep.objectives)) < 0.5
