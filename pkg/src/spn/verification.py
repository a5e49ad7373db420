"""Self-contained invariant checks surfaced by the `spn verify` subcommand.

Each check builds its own seeded random instances, runs the property at the
documented tolerance, and returns a CheckResult. The same functions back the
acceptance test suite, so `spn verify` and pytest agree by construction.
"""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .bp import BPConfig, decode, run_bp
from .crf import (ThetaFields, assignment_scores, bethe_free_energy, build_theta,
                  exact_summary)
from .graph import Graph
from .learning import (consistency_penalty, model_theta_tensors, proxy_loss,
                       pseudolikelihood_loss, refinement_objective)
from .models import EncoderConfig, MarginalModels, PseudomarginalSet
from .synthetic import random_connected_edges, random_tree_edges


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extras = " ".join(f"{k}={v}" for k, v in self.details.items())
        return f"[{status}] {self.name} {extras}".rstrip()


# ---------------------------------------------------------------------------
# random instance builders (shared with the test suite)
# ---------------------------------------------------------------------------

def random_graph(rng: np.random.Generator, num_nodes: int, num_labels: int,
                 feature_dim: int = 3, tree: bool = False,
                 labeled: bool = True) -> Graph:
    if tree:
        edges = random_tree_edges(rng, num_nodes)
    else:
        edges = random_connected_edges(rng, num_nodes)
    labels = tuple(int(v) for v in rng.integers(0, num_labels, size=num_nodes)) \
        if labeled else None
    return Graph(num_nodes=num_nodes, edges=edges,
                 features=rng.normal(size=(num_nodes, feature_dim)), labels=labels)


def random_theta(rng: np.random.Generator, graph: Graph, num_labels: int,
                 scale: float = 1.0) -> ThetaFields:
    return ThetaFields(
        node=rng.uniform(-scale, scale, size=(graph.num_nodes, num_labels)),
        edge=rng.uniform(-scale, scale,
                         size=(graph.num_edges, num_labels, num_labels)),
        edges=graph.edges)


def oracle_consistent_tau(theta: ThetaFields, graph: Graph) -> PseudomarginalSet:
    """Exactly consistent positive pseudomarginals: the marginals of a true joint."""
    summary = exact_summary(theta, graph)
    return PseudomarginalSet(node=summary.node_marginals,
                             edge=summary.edge_marginals, edges=graph.edges)


def small_models(rng_seed: int, feature_dim: int, num_labels: int,
                 hidden: int = 5, layers: int = 2, edge_head: str = "linear",
                 shared: bool = False) -> MarginalModels:
    return MarginalModels(
        feature_dim=feature_dim, num_labels=num_labels,
        encoder=EncoderConfig(num_layers=layers, hidden_dim=hidden, seed=rng_seed),
        shared=shared, edge_head=edge_head, seed=rng_seed)


def finite_difference_check(loss_fn, params: list, h: float = 1e-4,
                            rel_tol: float = 1e-4, abs_tol: float = 1e-6
                            ) -> tuple[bool, float]:
    """Compare reverse-mode gradients of loss_fn() against central differences.

    loss_fn must rebuild its tape on every call (it reads params by
    reference). Returns (ok, worst relative error among coordinates that
    exceed abs_tol).
    """
    grads = T.backward(loss_fn())
    worst = 0.0
    ok = True
    for p in params:
        analytic = grads.get(p, np.zeros_like(p.values))
        flat = p.values.ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = float(loss_fn().values)
            flat[i] = keep - h
            down = float(loss_fn().values)
            flat[i] = keep
            numeric = (up - down) / (2.0 * h)
            a = analytic.ravel()[i]
            diff = abs(numeric - a)
            rel = diff / max(abs(numeric), abs(a), 1e-300)
            worst = max(worst, rel if diff > abs_tol else 0.0)
            if diff > abs_tol and rel > rel_tol:
                ok = False
    return ok, worst


def _case_sizes(rng: np.random.Generator) -> tuple[int, int]:
    """(num_labels, num_nodes) subject to the oracle cap and the 12-node bound."""
    k = int(rng.choice([2, 3, 4]))
    max_n = {2: 12, 3: 12, 4: 10}[k]
    n = int(rng.integers(3, max_n + 1))
    return k, n


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

def check_fixed_point_construction(cases: int = 200, seed: int = 7) -> CheckResult:
    """Potentials built from consistent pseudomarginals leave uniform messages
    fixed under one synchronous sum-product round and reproduce tau as beliefs."""
    rng = np.random.default_rng(seed)
    worst_msg = 0.0
    worst_belief = 0.0
    config = BPConfig(mode="sum", max_iters=1, tol=1e-15, schedule="synchronous")
    for _ in range(cases):
        k, n = _case_sizes(rng)
        graph = random_graph(rng, n, k, labeled=False)
        tau = oracle_consistent_tau(random_theta(rng, graph, k), graph)
        theta = build_theta(tau)
        result = run_bp(theta, graph, config)
        uniform = np.full_like(result.messages.values, 1.0 / k)
        if result.messages.values.size:
            worst_msg = max(worst_msg,
                            float(np.max(np.abs(result.messages.values - uniform))))
        worst_belief = max(
            worst_belief,
            float(np.max(np.abs(result.beliefs.node - tau.node))),
            float(np.max(np.abs(result.beliefs.edge - tau.edge))) if tau.edge.size else 0.0)
    passed = worst_msg <= 1e-9 and worst_belief <= 1e-8
    return CheckResult("fixed_point_construction", passed,
                       {"cases": cases, "max_message_change": f"{worst_msg:.3e}",
                        "max_belief_deviation": f"{worst_belief:.3e}"})


def check_tree_exactness(trees: int = 100, seed: int = 11) -> CheckResult:
    """Sum-product beliefs equal oracle marginals on trees; max-product decode
    equals the oracle MAP whenever the optimum is unique."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    map_mismatches = 0
    unique_cases = 0
    sum_cfg = BPConfig(mode="sum", max_iters=100, tol=1e-12)
    max_cfg = BPConfig(mode="max", max_iters=100, tol=1e-12)
    for _ in range(trees):
        k = int(rng.choice([2, 3, 4]))
        n = int(rng.integers(2, {2: 12, 3: 12, 4: 10}[k] + 1))
        graph = random_graph(rng, n, k, tree=True, labeled=False)
        theta = random_theta(rng, graph, k)
        summary = exact_summary(theta, graph)
        result = run_bp(theta, graph, sum_cfg)
        worst = max(worst,
                    float(np.max(np.abs(result.beliefs.node - summary.node_marginals))))
        if theta.edges:
            worst = max(worst, float(np.max(
                np.abs(result.beliefs.edge - summary.edge_marginals))))
        _, scores = assignment_scores(theta, graph)
        top = np.sort(scores)[-2:]
        if len(scores) < 2 or top[1] - top[0] > 1e-9:
            unique_cases += 1
            mp = run_bp(theta, graph, max_cfg)
            if decode(theta, mp.messages, graph) != summary.map_assignment:
                map_mismatches += 1
    passed = worst <= 1e-8 and map_mismatches == 0
    return CheckResult("tree_exactness", passed,
                       {"trees": trees, "max_marginal_deviation": f"{worst:.3e}",
                        "unique_map_cases": unique_cases,
                        "map_mismatches": map_mismatches})


def check_gradients(cases: int = 20, seed: int = 13) -> CheckResult:
    """Finite-difference checks for every training objective."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    ok = True
    for c in range(cases):
        k = int(rng.choice([2, 3]))
        n = int(rng.integers(3, 6))
        graph = random_graph(rng, n, k, feature_dim=3)
        head = "bilinear" if c % 3 == 2 else "linear"
        shared = c % 4 == 3
        models = small_models(1000 + c, 3, k, hidden=4, layers=2,
                              edge_head=head, shared=shared)
        params = models.parameters()

        o1, w1 = finite_difference_check(lambda: proxy_loss(models, graph), params)
        o2, w2 = finite_difference_check(
            lambda: consistency_penalty(
                (models.node_tau(graph), models.edge_tau(graph)), graph), params)
        o3, w3 = finite_difference_check(
            lambda: pseudolikelihood_loss(models, graph), params)

        theta = build_theta(models.pseudomarginals(graph))
        beliefs = run_bp(theta, graph, BPConfig(mode="sum", max_iters=100,
                                                tol=1e-10)).beliefs

        def game_objective():
            tn, te = model_theta_tensors(models, graph)
            return refinement_objective(tn, te, graph, graph.labels, beliefs)

        o4, w4 = finite_difference_check(game_objective, params)
        worst = max(worst, w1, w2, w3, w4)
        ok = ok and o1 and o2 and o3 and o4
    return CheckResult("gradient_checks", ok,
                       {"cases": cases, "objectives": 4,
                        "worst_rel_error": f"{worst:.3e}"})


def check_moment_matching_identity(cases: int = 20, seed: int = 17) -> CheckResult:
    """Autodiff gradient of the game objective w.r.t. raw theta entries equals
    indicator minus belief, entrywise, at 1e-10."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        k, n = _case_sizes(rng)
        graph = random_graph(rng, n, k)
        theta = random_theta(rng, graph, k)
        beliefs = run_bp(theta, graph, BPConfig(mode="sum", max_iters=200,
                                                tol=1e-12)).beliefs
        theta_node = T.parameter(theta.node.copy(), name="theta_node")
        theta_edge = T.parameter(
            theta.edge.reshape(graph.num_edges, k * k).copy(), name="theta_edge")
        obj = refinement_objective(theta_node, theta_edge, graph,
                                   graph.labels, beliefs)
        grads = T.backward(obj)
        y = np.asarray(graph.labels)
        node_ind = np.zeros((n, k))
        node_ind[np.arange(n), y] = 1.0
        worst = max(worst, float(np.max(np.abs(
            grads[theta_node] - (node_ind - beliefs.node)))))
        if graph.num_edges:
            edge_ind = np.zeros((graph.num_edges, k * k))
            for e, (s, t) in enumerate(graph.edges):
                edge_ind[e, y[s] * k + y[t]] = 1.0
            expected = edge_ind - beliefs.edge.reshape(graph.num_edges, k * k)
            worst = max(worst, float(np.max(np.abs(grads[theta_edge] - expected))))
    return CheckResult("moment_matching_identity", worst <= 1e-10,
                       {"cases": cases, "max_abs_error": f"{worst:.3e}"})


def check_bethe_identities(trees: int = 50, cycles: int = 50, seed: int = 19
                           ) -> CheckResult:
    """Bethe entropy at exact marginals equals true entropy on trees and
    generically differs on 3-cycles."""
    rng = np.random.default_rng(seed)
    worst_tree = 0.0
    for _ in range(trees):
        k = int(rng.choice([2, 3]))
        n = int(rng.integers(2, 10))
        graph = random_graph(rng, n, k, tree=True, labeled=False)
        theta = random_theta(rng, graph, k)
        summary = exact_summary(theta, graph)
        bethe = bethe_free_energy(theta, oracle_consistent_tau(theta, graph))
        worst_tree = max(worst_tree, abs(bethe.bethe_entropy - summary.entropy))
    differing = 0
    for _ in range(cycles):
        k = int(rng.choice([2, 3]))
        graph = Graph(num_nodes=3, edges=[(0, 1), (1, 2), (0, 2)],
                      features=np.zeros((3, 1)))
        theta = random_theta(rng, graph, k, scale=1.5)
        summary = exact_summary(theta, graph)
        bethe = bethe_free_energy(theta, oracle_consistent_tau(theta, graph))
        if abs(bethe.bethe_entropy - summary.entropy) > 1e-6:
            differing += 1
    passed = worst_tree <= 1e-8 and differing >= 45
    return CheckResult("bethe_identities", passed,
                       {"trees": trees, "max_tree_deviation": f"{worst_tree:.3e}",
                        "cycles_differing": f"{differing}/{cycles}"})


ALL_CHECKS = {
    "fixed_point_construction": check_fixed_point_construction,
    "tree_exactness": check_tree_exactness,
    "gradient_checks": check_gradients,
    "moment_matching_identity": check_moment_matching_identity,
    "bethe_identities": check_bethe_identities,
}


def run_checks(pattern: str | None = None) -> list[CheckResult]:
    results = []
    for name, fn in ALL_CHECKS.items():
        if pattern and not fnmatch.fnmatch(name, pattern):
            continue
        results.append(fn())
    return results
