"""Pairwise CRFs whose potentials are assembled from learned node and edge
pseudomarginal distributions, trained by fitting the pseudomarginals to
observed labels, decoded with loopy belief propagation, and verified against
a brute-force exact-inference oracle on small graphs."""

from .bp import BeliefSet, BPConfig, BPResult, MessageSet, decode, infer_graph, run_bp
from .crf import (BetheSummary, ExactSummary, MomentMatchingReport, OracleInfeasibleError,
                  ThetaFields, bethe_free_energy, build_theta, check_moment_matching,
                  exact_summary, joint_log_score)
from .graph import (Dataset, DatasetError, Graph, LabelSpace, disjoint_union,
                    load_dataset, validate, write_dataset)
from .learning import (TrainConfig, TrainReport, consistency_penalty, proxy_loss,
                       pseudolikelihood_loss, refine_step, refinement_objective,
                       train_maximin, train_node_only, train_proxy,
                       train_pseudolikelihood)
from .metrics import MetricsReport, compute_metrics
from .models import (EncoderConfig, MarginalModels, PseudomarginalSet,
                     edge_pseudomarginals, node_pseudomarginals)
from .synthetic import SyntheticSpec, generate_synthetic
from .tensor import Adam, Tensor, backward

__version__ = "0.1.0"

__all__ = [
    "Adam", "BeliefSet", "BetheSummary", "BPConfig", "BPResult", "Dataset",
    "DatasetError", "EncoderConfig", "ExactSummary", "Graph", "LabelSpace",
    "MarginalModels", "MessageSet", "MetricsReport", "MomentMatchingReport",
    "OracleInfeasibleError", "PseudomarginalSet", "SyntheticSpec", "Tensor",
    "ThetaFields", "TrainConfig", "TrainReport", "backward", "bethe_free_energy",
    "build_theta", "check_moment_matching", "compute_metrics", "consistency_penalty",
    "decode", "disjoint_union", "edge_pseudomarginals", "exact_summary",
    "generate_synthetic", "infer_graph", "joint_log_score", "load_dataset",
    "node_pseudomarginals", "proxy_loss", "pseudolikelihood_loss", "refine_step",
    "refinement_objective", "run_bp", "train_maximin", "train_node_only",
    "train_proxy", "train_pseudolikelihood", "validate", "write_dataset",
]
