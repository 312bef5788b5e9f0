"""Metric suite and experiment harnesses: accuracy, precision@k of retrieved
neighbors, edge-matching accuracy against generator ground truth, structure
explanation AUC, deep-KNN baselines and the random-noise robustness sweep."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .datagen import GroundTruth
from .encoder import encode_nodes
from .explain import Explanation, explain_target, predict_many
from .graph import Graph, augment, normalize_adjacency
from .similarity import SimilarityScorer, SubgraphIndex, normalize_rows
from .training import TrainConfig, train


# ---------------------------------------------------------------------------
# metrics


def classification_accuracy(predictions: dict, labels: np.ndarray,
                            mask: np.ndarray) -> float:
    ids = np.flatnonzero(mask)
    if ids.size == 0:
        raise ValueError("classification_accuracy: empty mask")
    correct = 0
    for v in ids:
        v = int(v)
        if v not in predictions:
            raise ValueError(f"classification_accuracy: no prediction for node {v}")
        correct += int(predictions[v] == labels[v])
    return correct / ids.size


def precision_at_k(rankings: dict, labels: np.ndarray, ks) -> dict[int, float]:
    """Mean (over targets) fraction of the top-k ranked labeled nodes that
    share the target's true label."""
    ks = sorted(int(k) for k in ks)
    if not rankings:
        return {k: float("nan") for k in ks}
    out = {k: 0.0 for k in ks}
    for target, ranked in rankings.items():
        ranked = np.asarray(ranked)
        if ranked.size < ks[-1]:
            raise ValueError(f"ranking for {target} shorter than k={ks[-1]}")
        hits = labels[ranked] == labels[target]
        for k in ks:
            out[k] += hits[:k].mean()
    return {k: v / len(rankings) for k, v in out.items()}


def roc_auc(scores: np.ndarray, flags: np.ndarray) -> float:
    """Rank-based ROC AUC with average ranks on ties (0.5 credit per tie)."""
    flags = np.asarray(flags, dtype=bool)
    n_pos = int(flags.sum())
    n_neg = flags.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc: needs both classes")
    ranks = rankdata(np.asarray(scores, dtype=np.float64))
    return float((ranks[flags].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def edge_matching_accuracy(explanations: list[Explanation], gt: GroundTruth) -> float:
    """Fraction of matched edge pairs agreeing with the generator's edge
    correspondences, over (target, twin-neighbor) pairs.

    A pair is scorable when the target edge has a correspondence and the
    neighbor's copy still contains the corresponding edge (rewired edges
    drop out of the denominator).
    """
    node_group: dict[int, tuple[int, int]] = {}
    for gi, grp in enumerate(gt.twin_groups):
        for pos, v in enumerate(grp):
            node_group[int(v)] = (gi, pos)
    corr = gt.edge_correspondence
    scorable = 0
    correct = 0
    for exp in explanations:
        t = exp.target
        if t not in node_group:
            continue
        t_group, _ = node_group[t]
        twin_ids = set(gt.twin_groups[t_group])
        for rec in exp.neighbor_set.neighbors:
            if rec.node not in twin_ids:
                continue
            _, nb_pos = node_group[rec.node]
            for t_edge, matched, _ in rec.matching.pairs:
                src = corr.get(t_edge)
                if src is None:
                    continue
                ga = node_group.get(t_edge[0])
                gb = node_group.get(t_edge[1])
                if ga is None or gb is None:
                    continue
                a2 = gt.twin_groups[ga[0]][nb_pos]
                b2 = gt.twin_groups[gb[0]][nb_pos]
                expected = (min(a2, b2), max(a2, b2))
                if corr.get(expected) != src:
                    continue
                scorable += 1
                correct += int(matched == expected)
    if scorable == 0:
        raise ValueError("edge_matching_accuracy: no scorable matched pairs")
    return correct / scorable


def explanation_auc(explanations: list[Explanation], motif_edges,
                    warn=None) -> float:
    """Mean per-target ROC AUC of edge importances against motif membership.
    Targets whose local graph carries a single class are skipped."""
    motif_set = {(int(a), int(b)) for a, b in motif_edges}
    aucs = []
    for exp in explanations:
        if exp.edge_importances.size == 0:
            continue
        flags = np.array([tuple(int(x) for x in e) in motif_set for e in exp.target_edges])
        if flags.all() or not flags.any():
            if warn is not None:
                warn(f"target {exp.target}: single-class ground truth, skipped")
            continue
        aucs.append(roc_auc(exp.edge_importances, flags))
    if not aucs:
        raise ValueError("explanation_auc: no target with both edge classes")
    return float(np.mean(aucs))


# ---------------------------------------------------------------------------
# report


@dataclass
class MetricsReport:
    per_seed: list[dict] = field(default_factory=list)

    def add(self, seed: int, values: dict) -> None:
        self.per_seed.append({"seed": seed, **values})

    def metric_names(self) -> list[str]:
        names = []
        for row in self.per_seed:
            for k in row:
                if k != "seed" and k not in names:
                    names.append(k)
        return names

    def summary(self) -> dict:
        out = {}
        for name in self.metric_names():
            vals = [row[name] for row in self.per_seed if name in row]
            if isinstance(vals[0], dict):  # precision@k style
                out[name] = {
                    str(k): self._mean_std([v[k] for v in vals])
                    for k in vals[0]
                }
            else:
                out[name] = self._mean_std(vals)
        return out

    @staticmethod
    def _mean_std(vals) -> dict:
        arr = np.asarray(vals, dtype=np.float64)
        entry = {"mean": float(arr.mean())}
        if arr.size >= 2:
            entry["std"] = float(arr.std(ddof=1))
        return entry

    def to_json(self) -> dict:
        return {"per_seed": self.per_seed, "summary": self.summary()}

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, default=float)
            fh.write("\n")


# ---------------------------------------------------------------------------
# deep-KNN baselines


@dataclass
class BaselineModel:
    variant: str
    params: list[Tensor]
    embeddings: np.ndarray


def _cross_entropy(logits: Tensor, labels: np.ndarray, ids: np.ndarray) -> Tensor:
    """Mean CE over ``ids``; the row-max shift is constant w.r.t. gradients."""
    picked = ad.gather_rows(logits, ids)
    shift = Tensor(np.repeat(picked.data.max(axis=1, keepdims=True),
                             picked.cols, axis=1))
    z = ad.exp(ad.add(picked, ad.scalar_mul(shift, -1.0)))
    lse = ad.log(ad.matmul(z, Tensor(np.ones((picked.cols, 1)))))
    onehot = np.zeros((ids.size, picked.cols))
    onehot[np.arange(ids.size), labels[ids]] = 1.0
    true_logit = ad.matmul(ad.mul(ad.add(picked, ad.scalar_mul(shift, -1.0)),
                                  Tensor(onehot)), Tensor(np.ones((picked.cols, 1))))
    return ad.reduce_mean(ad.add(lse, ad.scalar_mul(true_logit, -1.0)))


def train_baseline(g: Graph, variant: str, hidden: int = 64, lr: float = 0.01,
                   epochs: int = 200, patience: int = 30, seed: int = 0) -> BaselineModel:
    """Two-layer MLP or graph-convolution classifier trained with cross
    entropy; the final-layer outputs become the retrieval embeddings."""
    if variant not in ("mlp_k", "gcn_k"):
        raise ValueError(f"unknown baseline variant {variant!r}")
    ss = np.random.SeedSequence(seed).spawn(2)
    c = g.num_classes
    w1 = ad.xavier_init(g.feature_dim, hidden, ss[0])
    b1 = Tensor(np.zeros((1, hidden)), requires_grad=True)
    w2 = ad.xavier_init(hidden, c, ss[1])
    b2 = Tensor(np.zeros((1, c)), requires_grad=True)
    params = [w1, b1, w2, b2]
    opt = ad.AdamState(params, lr=lr)
    adj = normalize_adjacency(g).matrix if variant == "gcn_k" else None
    x = Tensor(g.features)
    train_ids = np.flatnonzero(g.train_mask)
    val_ids = np.flatnonzero(g.val_mask)

    def forward() -> Tensor:
        h = x
        if adj is not None:
            h = ad.csr_matmul(adj, h)
        h = ad.relu(ad.add(ad.matmul(h, w1), b1))
        if adj is not None:
            h = ad.csr_matmul(adj, h)
        return ad.add(ad.matmul(h, w2), b2)

    best = None
    best_acc = -1.0
    last_improve = 0
    for epoch in range(1, epochs + 1):
        with Tape() as tape:
            loss = _cross_entropy(forward(), g.labels, train_ids)
            tape.backward(loss)
        ad.adam_step(params, opt)
        if val_ids.size and epoch % 5 == 0:
            logits = forward().data
            acc = float(np.mean(np.argmax(logits[val_ids], axis=1) == g.labels[val_ids]))
            if acc > best_acc:
                best_acc = acc
                best = [p.data.copy() for p in params]
                last_improve = epoch
            if epoch - last_improve >= patience:
                break
    if best is not None:
        for p, d in zip(params, best):
            p.data = d
    return BaselineModel(variant, params, forward().data)


def knn_predict(embeddings: np.ndarray, labels: np.ndarray, labeled_ids,
                targets, k: int, tau: float, num_classes: int) -> np.ndarray:
    """Cosine K-nearest labeled retrieval plus softmax label voting over
    plain embeddings (node level only); the baselines' prediction path."""
    en = normalize_rows(embeddings)
    labeled_ids = np.asarray(labeled_ids, dtype=np.int64)
    preds = []
    for t in np.asarray(targets, dtype=np.int64):
        cand = labeled_ids[labeled_ids != t]
        sims = en[cand] @ en[t]
        order = np.lexsort((cand, -sims))[:min(k, cand.size)]
        z = np.exp((sims[order] - sims[order].max()) / tau)
        w = z / z.sum()
        dist = np.zeros(num_classes)
        np.add.at(dist, labels[cand[order]], w)
        preds.append(int(np.argmax(dist)))
    return np.array(preds, dtype=np.int64)


# ---------------------------------------------------------------------------
# model evaluation harness


def build_scorer(g: Graph, h: np.ndarray, cfg: TrainConfig,
                 cap_targets: bool = True) -> SimilarityScorer:
    index = SubgraphIndex(g, cfg.hop, cfg.match_edge_cap)
    return SimilarityScorer(index, h, cfg.lam, cap_targets=cap_targets)


def rank_labeled(scorer: SimilarityScorer, target: int, labeled_ids) -> np.ndarray:
    """All labeled candidates sorted by overall similarity (ties: lower id)."""
    labeled_ids = np.asarray(labeled_ids, dtype=np.int64)
    cand = labeled_ids[labeled_ids != target]
    overall, _, _, _ = scorer.score(target, cand)
    return cand[np.lexsort((cand, -overall))]


def motif_member_nodes(gt: GroundTruth) -> set[int]:
    nodes = {int(v) for grp in gt.twin_groups for v in grp}
    nodes |= {int(v) for e in gt.motif_edges for v in e}
    return nodes


def evaluate_model(g: Graph, h: np.ndarray, cfg: TrainConfig, metrics,
                   gt: GroundTruth | None = None, threads: int = 1,
                   precision_ks=range(1, 9), warn=None) -> dict:
    """Compute the requested metrics for one trained embedding matrix."""
    out: dict = {}
    test_ids = np.flatnonzero(g.test_mask)
    labeled = g.labeled_ids()
    if "accuracy" in metrics:
        scorer = build_scorer(g, h, cfg, cap_targets=True)
        preds = predict_many(scorer, test_ids, labeled, cfg.k, cfg.tau,
                             g.num_classes, threads=threads)
        out["accuracy"] = float(np.mean(preds == g.labels[test_ids]))
    if "precision_at_k" in metrics:
        scorer = build_scorer(g, h, cfg, cap_targets=True)
        ks = list(precision_ks)
        rankings = {int(t): rank_labeled(scorer, int(t), labeled) for t in test_ids}
        out["precision_at_k"] = precision_at_k(rankings, g.labels, ks)
    needs_explanations = ("edge_acc" in metrics or "explanation_auc" in metrics)
    if needs_explanations:
        if gt is None:
            raise ValueError("edge_acc / explanation_auc require ground truth tables")
        members = motif_member_nodes(gt)
        targets = [int(t) for t in test_ids if int(t) in members]
        scorer = build_scorer(g, h, cfg, cap_targets=False)
        explanations = [explain_target(scorer, t, labeled, cfg.k, cfg.tau,
                                       g.num_classes) for t in targets]
        if "edge_acc" in metrics:
            out["edge_acc"] = edge_matching_accuracy(explanations, gt)
        if "explanation_auc" in metrics:
            out["explanation_auc"] = explanation_auc(explanations, gt.motif_edges,
                                                     warn=warn)
    return out


# ---------------------------------------------------------------------------
# robustness sweep


def robustness_sweep(g: Graph, cfg: TrainConfig, rates, seeds,
                     progress=None) -> list[dict]:
    """Random edge-noise sweep: at each rate and seed, retrain the full model
    and the graph-convolution KNN baseline from scratch on the perturbed
    graph and record test accuracy rows ``{rate, model, seed, accuracy}``."""
    rows = []
    test_ids = np.flatnonzero(g.test_mask)
    for rate in rates:
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"perturbation rate {rate} outside [0, 1]")
        for seed in seeds:
            noisy = augment(g, "edge_perturb", rate,
                            np.random.default_rng(int(seed) * 7919 + 17))
            run_cfg = replace(cfg, seed=int(seed))
            result = train(noisy, run_cfg)
            emb = encode_nodes(noisy, normalize_adjacency(noisy), result.params)
            scorer = build_scorer(noisy, emb.values, run_cfg, cap_targets=True)
            preds = predict_many(scorer, test_ids, noisy.labeled_ids(),
                                 run_cfg.k, run_cfg.tau, noisy.num_classes)
            acc = float(np.mean(preds == noisy.labels[test_ids]))
            rows.append({"rate": rate, "model": "segnn", "seed": int(seed),
                         "accuracy": acc})
            base = train_baseline(noisy, "gcn_k", hidden=cfg.hidden, seed=int(seed))
            bpred = knn_predict(base.embeddings, noisy.labels, noisy.labeled_ids(),
                                test_ids, run_cfg.k, run_cfg.tau, noisy.num_classes)
            bacc = float(np.mean(bpred == noisy.labels[test_ids]))
            rows.append({"rate": rate, "model": "gcn_k", "seed": int(seed),
                         "accuracy": bacc})
            if progress is not None:
                progress(rows[-2])
                progress(rows[-1])
    return rows


def write_robustness_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("rate,model,seed,accuracy\n")
        for r in rows:
            fh.write(f"{r['rate']},{r['model']},{r['seed']},{r['accuracy']:.6f}\n")
