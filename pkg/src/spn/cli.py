"""Command-line front end: train, eval, infer, verify, generate.

Exit codes: 0 success, 1 usage error, 2 verification/test failure, 3 I/O
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .bp import BPConfig, infer_graph
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import DEFAULT_CONFIG, encoder_config, load_experiment, synthetic_spec_from_obj
from .graph import DatasetError, Graph, load_dataset, write_dataset
from .learning import (train_maximin, train_node_only, train_proxy,
                       train_pseudolikelihood, node_only_predict)
from .metrics import MetricsReport, compute_metrics
from .models import MarginalModels
from .synthetic import generate_synthetic
from .verification import run_checks

METHODS = ("proxy", "proxy+refine", "maximin", "pseudolikelihood", "node-only")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CHECK_FAILED = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def _metrics_text(report: MetricsReport) -> str:
    rows = [("node_accuracy", report.node_accuracy),
            ("micro_f1", report.micro_f1),
            ("graph_accuracy", report.graph_accuracy)]
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name.ljust(width)}  {value:.6f}" for name, value in rows)


def _cmd_train(args) -> int:
    config = load_experiment(args.config)
    dataset = config.load_data()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    models = MarginalModels(
        feature_dim=dataset.feature_dim,
        num_labels=dataset.label_space.size,
        encoder=encoder_config(config),
        shared=config.model.shared,
        edge_head=config.model.edge_head,
        gamma=config.model.gamma,
        seed=config.seed,
    )
    train_cfg = config.train
    if args.method == "proxy":
        report = train_proxy(models, dataset, train_cfg, eval_bp=config.bp)
    elif args.method == "proxy+refine":
        if train_cfg.refine_epochs <= 0:
            train_cfg = replace(train_cfg, refine_epochs=10)
        report = train_proxy(models, dataset, train_cfg, eval_bp=config.bp)
    elif args.method == "maximin":
        report = train_maximin(models, dataset, train_cfg, eval_bp=config.bp)
    elif args.method == "pseudolikelihood":
        report = train_pseudolikelihood(models, dataset, train_cfg, eval_bp=config.bp)
    else:
        report = train_node_only(models, dataset, train_cfg)

    save_checkpoint(out_dir / "checkpoint.json", models,
                    extra={"method": args.method, "seed": config.seed,
                           "bp": asdict(config.bp)})
    with open(out_dir / "train_report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    for split, metrics in report.metrics.items():
        print(f"split {split}:")
        print(_metrics_text(metrics))
    print(f"wrote {out_dir / 'checkpoint.json'} and {out_dir / 'train_report.json'}")
    return EXIT_OK


def _checkpoint_bp(extra: dict) -> BPConfig:
    obj = extra.get("bp")
    return BPConfig(**obj) if obj else BPConfig()


def _cmd_eval(args) -> int:
    models, extra = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    graphs = dataset.split(args.split)
    if any(g.labels is None for g in graphs):
        raise DatasetError(f"split '{args.split}' has unlabeled graphs; cannot score")
    if extra.get("method") == "node-only":
        preds = [node_only_predict(models, g) for g in graphs]
    else:
        bp_config = _checkpoint_bp(extra)
        preds = [infer_graph(models, g, bp_config).labels for g in graphs]
    report = compute_metrics(preds, graphs)
    payload = json.dumps(report.to_dict(), sort_keys=True)
    print(payload)
    print(_metrics_text(report), file=sys.stderr)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(payload)
    return EXIT_OK


def _cmd_infer(args) -> int:
    models, extra = load_checkpoint(args.checkpoint)
    with open(args.graph) as fh:
        obj = json.load(fh)
    graph = Graph(num_nodes=int(obj["num_nodes"]), edges=obj.get("edges", []),
                  features=np.asarray(obj["features"], dtype=np.float64))
    if graph.feature_dim != models.feature_dim:
        raise DatasetError(
            f"graph feature dim {graph.feature_dim} does not match "
            f"checkpoint feature dim {models.feature_dim}")
    if extra.get("method") == "node-only":
        labels = node_only_predict(models, graph)
    else:
        labels = infer_graph(models, graph, _checkpoint_bp(extra)).labels
    payload = json.dumps({"labels": list(labels)})
    print(payload)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(payload)
    return EXIT_OK


def _cmd_verify(args) -> int:
    results = run_checks(args.filter)
    if not results:
        print(f"no checks match filter '{args.filter}'", file=sys.stderr)
        return EXIT_USAGE
    for result in results:
        print(result.line())
    summary = {r.name: r.passed for r in results}
    print(json.dumps({"passed": all(summary.values()), "checks": summary}))
    return EXIT_OK if all(summary.values()) else EXIT_CHECK_FAILED


def _cmd_generate(args) -> int:
    with open(args.spec) as fh:
        spec = synthetic_spec_from_obj(json.load(fh))
    dataset = generate_synthetic(spec)
    write_dataset(dataset, args.out)
    counts = {name: len(graphs) for name, graphs in dataset.splits.items()}
    print(f"wrote {args.out} with splits {counts}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spn",
                     description="pairwise CRFs from learned pseudomarginals")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from an experiment config")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--method", choices=METHODS, default="proxy")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.set_defaults(fn=_cmd_train)

    p_eval = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--split", default="test")
    p_eval.add_argument("--out")
    p_eval.set_defaults(fn=_cmd_eval)

    p_infer = sub.add_parser("infer", help="label a single unlabeled graph file")
    p_infer.add_argument("--checkpoint", required=True)
    p_infer.add_argument("--graph", required=True)
    p_infer.add_argument("--out")
    p_infer.set_defaults(fn=_cmd_infer)

    p_verify = sub.add_parser("verify", help="run the invariant suite")
    p_verify.add_argument("--filter", default=None,
                          help="glob pattern over check names")
    p_verify.set_defaults(fn=_cmd_verify)

    p_gen = sub.add_parser("generate", help="write a synthetic dataset file")
    p_gen.add_argument("--spec", required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(fn=_cmd_generate)

    p_cfg = sub.add_parser("default-config", help="print a template experiment config")
    p_cfg.set_defaults(fn=lambda args: print(json.dumps(DEFAULT_CONFIG, indent=2)) or EXIT_OK)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (DatasetError, CheckpointError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
