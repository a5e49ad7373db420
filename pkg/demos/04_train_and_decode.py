"""Train on structured synthetic graphs and compare decoders.

The generator samples labels exactly from an attractive pairwise model, so
neighboring labels agree far more often than chance, while node features are
a noisy one-hot of the label. A factorized baseline (node head + argmax)
ignores the correlation; the full model feeds learned node and edge
pseudomarginals into max-product BP and decodes jointly, which pays off most
in graph-level accuracy (all nodes right at once).
"""


from spn.bp import BPConfig, infer_graph
from spn.learning import TrainConfig, node_only_predict, train_node_only, train_proxy
from spn.metrics import compute_metrics
from spn.models import EncoderConfig, MarginalModels
from spn.synthetic import SyntheticSpec, generate_synthetic

spec = SyntheticSpec(num_graphs={"train": 60, "test": 40}, nodes_per_graph=8,
                     label_space=3, feature_dim=3, coupling_strength=1.5,
                     noise=1.0, seed=0)
ds = generate_synthetic(spec)
test = ds.split("test")

agree = sum(int(g.labels[s] == g.labels[t]) for g in test for s, t in g.edges)
total = sum(g.num_edges for g in test)
print(f"neighbor label agreement in the data: {agree / total:.2f} "
      f"(chance would be {1 / 3:.2f})")


def fresh_models():
    return MarginalModels(feature_dim=3, num_labels=3,
                          encoder=EncoderConfig(num_layers=2, hidden_dim=16,
                                                seed=0),
                          shared=True, edge_head="linear", seed=0)


train_cfg = TrainConfig(epochs=120, node_lr=1e-2, edge_lr=1e-2, alpha=10.0)

node_models = fresh_models()
train_node_only(node_models, ds, train_cfg, eval_metrics=False)
m_node = compute_metrics([node_only_predict(node_models, g) for g in test], test)
print(f"node-only baseline: node accuracy {m_node.node_accuracy:.3f}, "
      f"graph accuracy {m_node.graph_accuracy:.3f}")

full_models = fresh_models()
train_proxy(full_models, ds, train_cfg)
bp = BPConfig(mode="max", max_iters=50, tol=1e-6)
m_full = compute_metrics([infer_graph(full_models, g, bp).labels for g in test],
                         test)
print(f"pseudomarginal CRF: node accuracy {m_full.node_accuracy:.3f}, "
      f"graph accuracy {m_full.graph_accuracy:.3f}")
print("the edge head plus joint decoding recovers whole graphs the "
      "factorized baseline gets partially wrong")
