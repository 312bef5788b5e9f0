"""Command-line entry point: dataset generation, training, explanation and
evaluation as reproducible, self-describing runs.

Exit codes: 0 success, 1 usage/config error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import (ConfigError, build_dataclass, coerce_value, echo_config,
                     parse_config_file)
from .datagen import (BaShapesConfig, CoraLikeConfig, GenerationError,
                      GroundTruth, SynCoraConfig, gen_ba_shapes, gen_cora_like,
                      gen_syn_cora)
from .encoder import encode_nodes, load_model, save_model
from .evaluation import (MetricsReport, evaluate_model, robustness_sweep,
                         write_robustness_csv)
from .explain import explain_target, explanation_to_dot, write_explanations
from .graph import (DatasetError, Graph, augment, largest_connected_component,
                    load_dataset, normalize_adjacency, save_dataset)
from .plots import plot_precision_at_k, plot_robustness, plot_training_curves
from .similarity import SimilarityScorer, SubgraphIndex
from .training import TrainConfig, TrainingDiverged, train, write_train_log


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        raise CliError(message, code=1)


def _gather_values(args) -> dict:
    values = parse_config_file(args.config) if getattr(args, "config", None) else {}
    for key in ("data", "out", "source", "model", "seed", "threads", "targets",
                "metrics", "rates", "rate", "seeds", "crucial_frac", "ground_truth"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = coerce_value(key, v) if isinstance(v, str) else v
    return values


def _summary(g: Graph) -> str:
    hist = {}
    for c in range(g.num_classes):
        hist[c] = int(np.sum(g.labels == c))
    return (f"nodes={g.node_count} edges={g.edge_count} features={g.feature_dim} "
            f"classes={g.num_classes} class_histogram={hist} "
            f"train={int(g.train_mask.sum())} val={int(g.val_mask.sum())} "
            f"test={int(g.test_mask.sum())}")


def cmd_generate(args) -> int:
    values = _gather_values(args)
    seed = int(values.get("seed", 0))
    out = values.get("out")
    if not out:
        raise CliError("generate: --out is required")
    rng = np.random.default_rng(seed)
    if args.kind == "ba-shapes":
        cfg = build_dataclass(BaShapesConfig, values)
        g, gt = gen_ba_shapes(cfg, rng)
    elif args.kind == "syn-cora":
        source_dir = values.get("source")
        if not source_dir:
            raise CliError("generate syn-cora: --source dataset directory is required")
        source = load_dataset(source_dir)
        cfg = build_dataclass(SynCoraConfig, values)
        g, gt = gen_syn_cora(source, cfg, rng)
    elif args.kind == "cora-like":
        cfg = build_dataclass(CoraLikeConfig, values)
        g = gen_cora_like(cfg, rng)
        gt = None
    else:
        raise CliError(f"generate: unknown kind {args.kind!r}")
    save_dataset(g, out)
    if gt is not None:
        gt.save(os.path.join(out, "ground_truth.json"))
    echo_config({**values, "kind": args.kind, "seed": seed}, out)
    print(f"generated {args.kind}: {_summary(g)}")
    return 0


def cmd_train(args) -> int:
    values = _gather_values(args)
    data_dir = values.get("data")
    out = values.get("out")
    if not data_dir or not out:
        raise CliError("train: --data and --out are required")
    g = load_dataset(data_dir, strict_isolated=bool(values.get("strict_isolated", False)))
    if "seed" in values:
        values["seed"] = int(values["seed"])
    cfg = build_dataclass(TrainConfig, values)
    os.makedirs(out, exist_ok=True)
    try:
        result = train(g, cfg)
    except TrainingDiverged as e:
        print(f"training diverged: {e}", file=sys.stderr)
        raise CliError(str(e), code=2) from None
    save_model(result.params, os.path.join(out, "model.bin"))
    write_train_log(result.log, os.path.join(out, "train_log.csv"))
    plot_training_curves(result.log, os.path.join(out, "train_curves.png"))
    echo_config({**{f: getattr(cfg, f) for f in cfg.__dataclass_fields__},
                 "data": data_dir, "out": out}, out)
    best = f"{result.best_val_acc:.4f}" if np.isfinite(result.best_val_acc) else "n/a"
    print(f"trained {result.epochs_run} epochs; best val accuracy {best} "
          f"(epoch {result.best_epoch})")
    return 0


def _load_model_and_data(values) -> tuple[Graph, "EncoderParams", TrainConfig]:
    data_dir = values.get("data")
    model_path = values.get("model")
    if not data_dir or not model_path:
        raise CliError("--data and --model are required")
    if isinstance(model_path, list):
        model_path = model_path[0]
    g = load_dataset(data_dir)
    params = load_model(model_path)
    if params.feature_dim != g.feature_dim:
        raise CliError(f"model expects {params.feature_dim} features, "
                       f"dataset has {g.feature_dim}")
    cfg = build_dataclass(TrainConfig, values)
    return g, params, cfg


def cmd_explain(args) -> int:
    values = _gather_values(args)
    out = values.get("out")
    if not out:
        raise CliError("explain: --out is required")
    g, params, cfg = _load_model_and_data(values)
    if args.all_test:
        targets = [int(t) for t in np.flatnonzero(g.test_mask)]
    elif values.get("targets"):
        targets = [int(t) for t in str(values["targets"]).split(",") if t != ""]
    else:
        raise CliError("explain: give --targets or --all-test")
    bad = [t for t in targets if not 0 <= t < g.node_count]
    if bad:
        raise CliError(f"unknown target id(s) {bad}; valid range is 0..{g.node_count - 1}")
    emb = encode_nodes(g, normalize_adjacency(g), params)
    index = SubgraphIndex(g, cfg.hop, cfg.match_edge_cap)
    scorer = SimilarityScorer(index, emb.values, cfg.lam, cap_targets=False)
    labeled = g.labeled_ids()
    crucial_frac = float(values.get("crucial_frac", 0.8))
    threads = int(values.get("threads", 1))

    def one(t):
        return explain_target(scorer, t, labeled, cfg.k, cfg.tau,
                              g.num_classes, crucial_frac)

    if threads > 1 and len(targets) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            explanations = list(pool.map(one, targets))
    else:
        explanations = [one(t) for t in targets]
    os.makedirs(out, exist_ok=True)
    write_explanations(explanations, os.path.join(out, "explanations.json"))
    if args.dot:
        for exp in explanations:
            neighbor_edges = {r.node: scorer.g.edges[index.edge_ids(r.node)]
                              for r in exp.neighbor_set.neighbors}
            with open(os.path.join(out, f"explanation_{exp.target}.dot"),
                      "w", encoding="utf-8") as fh:
                fh.write(explanation_to_dot(exp, neighbor_edges))
    echo_config({**values, "out": out}, out)
    print(f"wrote {len(explanations)} explanation(s) to {out}")
    return 0


def cmd_evaluate(args) -> int:
    values = _gather_values(args)
    out = values.get("out")
    if not out:
        raise CliError("evaluate: --out is required")
    os.makedirs(out, exist_ok=True)
    metric_list = [m.strip() for m in str(values.get("metrics", "accuracy")).split(",") if m]
    rates = values.get("rates")
    seeds = values.get("seeds", [0])

    if args.robustness:
        data_dir = values.get("data")
        if not data_dir:
            raise CliError("evaluate --robustness: --data is required")
        g = load_dataset(data_dir)
        cfg = build_dataclass(TrainConfig, values)
        if not rates:
            rates = (0.0, 0.05, 0.10, 0.15, 0.20, 0.25)
        rows = robustness_sweep(g, cfg, rates, seeds,
                                progress=lambda r: print(
                                    f"  rate={r['rate']} {r['model']} seed={r['seed']} "
                                    f"accuracy={r['accuracy']:.4f}"))
        write_robustness_csv(rows, os.path.join(out, "robustness.csv"))
        plot_robustness(rows, os.path.join(out, "robustness.png"))
        echo_config({**values, "out": out}, out)
        print(f"robustness sweep written to {out}")
        return 0

    model_paths = values.get("model")
    if isinstance(model_paths, str):
        model_paths = [model_paths]
    if not model_paths:
        raise CliError("evaluate: --model is required (repeat for multiple seeds)")
    data_dir = values.get("data")
    if not data_dir:
        raise CliError("evaluate: --data is required")
    g = load_dataset(data_dir)
    cfg = build_dataclass(TrainConfig, values)
    gt = None
    if any(m in ("edge_acc", "explanation_auc") for m in metric_list):
        gt_path = values.get("ground_truth") or os.path.join(data_dir, "ground_truth.json")
        if not os.path.isfile(gt_path):
            raise CliError(f"metric needs ground truth tables: {gt_path} not found")
        gt = GroundTruth.load(gt_path)
    report = MetricsReport()
    adj = normalize_adjacency(g)
    if len(seeds) < len(model_paths):
        seeds = list(range(len(model_paths)))
    for seed, path in zip(seeds, model_paths):
        params = load_model(path)
        if params.feature_dim != g.feature_dim:
            raise CliError(f"{path}: feature width mismatch with dataset")
        emb = encode_nodes(g, adj, params)
        vals = evaluate_model(g, emb.values, cfg, metric_list, gt,
                              threads=int(values.get("threads", 1)),
                              warn=lambda m: print(f"  warning: {m}", file=sys.stderr))
        report.add(int(seed), vals)
        print(f"model {path}: " + " ".join(
            f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}"
            for k, v in vals.items()))
    report.save(os.path.join(out, "metrics.json"))
    if "precision_at_k" in report.metric_names():
        curves = {"segnn": {int(k): v["mean"] for k, v in
                            report.summary()["precision_at_k"].items()}}
        plot_precision_at_k(curves, os.path.join(out, "precision_at_k.png"))
    echo_config({**values, "out": out}, out)
    print(f"metrics written to {os.path.join(out, 'metrics.json')}")
    return 0


def cmd_perturb(args) -> int:
    values = _gather_values(args)
    data_dir = values.get("data")
    out = values.get("out")
    if not data_dir or not out:
        raise CliError("perturb: --data and --out are required")
    g = load_dataset(data_dir)
    if args.largest_component:
        g, kept = largest_connected_component(g)
        print(f"kept largest component: {kept.size} nodes")
    if args.mode:
        rate = float(values.get("rate", args.rate if args.rate is not None else 0.0))
        seed = int(values.get("seed", 0))
        g = augment(g, args.mode, rate, np.random.default_rng(seed))
        print(f"applied {args.mode} rate={rate} seed={seed}")
    elif not args.largest_component:
        raise CliError("perturb: give --mode and --rate, or --largest-component")
    save_dataset(g, out)
    src_gt = os.path.join(data_dir, "ground_truth.json")
    if os.path.isfile(src_gt) and not args.largest_component:
        # node ids are unchanged by augmentation, so the tables still apply
        with open(src_gt, encoding="utf-8") as fh:
            payload = fh.read()
        with open(os.path.join(out, "ground_truth.json"), "w", encoding="utf-8") as fh:
            fh.write(payload)
    echo_config({**values, "out": out}, out)
    print(f"perturbed dataset: {_summary(g)}")
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="segnn",
                description="Self-explainable GNN: train, explain and evaluate "
                            "K-nearest labeled-node classifiers.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, data=False, model=False, out=True):
        sp.add_argument("--config", help="flat key = value configuration file")
        if data:
            sp.add_argument("--data", help="dataset directory")
        if model:
            sp.add_argument("--model", action="append", help="model file (repeatable)")
        if out:
            sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker cap for per-target fan-out")

    g = sub.add_parser("generate", help="write a synthetic dataset directory")
    g.add_argument("kind", choices=["ba-shapes", "syn-cora", "cora-like"])
    g.add_argument("--source", help="source dataset directory (syn-cora)")
    g.add_argument("--seed", type=int, default=None)
    common(g)
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("train", help="train a model on a dataset directory")
    t.add_argument("--seed", type=int, default=None)
    common(t, data=True)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("explain", help="emit explanation records for targets")
    e.add_argument("--targets", help="comma-separated node ids")
    e.add_argument("--all-test", action="store_true")
    e.add_argument("--dot", action="store_true", help="also write DOT renderings")
    e.add_argument("--crucial-frac", dest="crucial_frac", type=float, default=None)
    common(e, data=True, model=True)
    e.set_defaults(fn=cmd_explain)

    v = sub.add_parser("evaluate", help="compute metrics / robustness sweep")
    v.add_argument("--metrics", help="comma list: accuracy,precision_at_k,edge_acc,explanation_auc")
    v.add_argument("--robustness", action="store_true", help="run the noise sweep")
    v.add_argument("--rates", help="comma list of perturbation rates")
    v.add_argument("--seeds", help="comma list of seeds")
    v.add_argument("--ground-truth", dest="ground_truth", help="ground_truth.json path")
    common(v, data=True, model=True)
    v.set_defaults(fn=cmd_evaluate)

    r = sub.add_parser("perturb", help="apply an augmentation to a dataset")
    r.add_argument("--mode", choices=["attribute_mask", "edge_perturb"])
    r.add_argument("--rate", type=float, default=None)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--largest-component", action="store_true",
                   help="restrict to the largest connected component first")
    common(r, data=True)
    r.set_defaults(fn=cmd_perturb)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (ConfigError, DatasetError, GenerationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except TrainingDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
