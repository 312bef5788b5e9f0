"""Prediction and explanation: K-nearest labeled-node retrieval, softmax
label voting, per-edge importance and crucial-subgraph extraction, plus the
JSON / DOT serializations of explanation records."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .similarity import EdgeMatching, SimilarityScore, SimilarityScorer


@dataclass
class NeighborRecord:
    node: int
    label: int
    score: SimilarityScore
    matching: EdgeMatching


@dataclass
class NeighborSet:
    """The K most similar labeled nodes of a target, best first."""

    target: int
    neighbors: list[NeighborRecord]


@dataclass
class Prediction:
    distribution: np.ndarray
    predicted_class: int
    weights: np.ndarray


@dataclass
class Explanation:
    target: int
    prediction: Prediction
    neighbor_set: NeighborSet
    target_edges: np.ndarray
    edge_importances: np.ndarray
    crucial_edges: list[int] = field(default_factory=list)


def k_nearest_labeled(scorer: SimilarityScorer, target: int, labeled_ids,
                      k: int) -> NeighborSet:
    """Exact top-k of the labeled pool by overall similarity (ties to the
    lower node id). The target itself is excluded from the candidates."""
    cand = np.asarray([v for v in np.asarray(labeled_ids) if v != target], dtype=np.int64)
    if cand.size == 0:
        raise ValueError("k_nearest_labeled: empty labeled candidate set")
    if k < 1:
        raise ValueError("k_nearest_labeled: k must be >= 1")
    overall, ns, ss, matches = scorer.score(target, cand, want_matchings=True)
    order = np.lexsort((cand, -overall))[:min(k, cand.size)]
    records = []
    for i in order:
        c = int(cand[i])
        records.append(NeighborRecord(
            node=c,
            label=int(scorer.g.labels[c]),
            score=SimilarityScore(float(ns[i]), float(ss[i]), scorer.lam),
            matching=scorer.matching_record(target, c, matches[i]),
        ))
    return NeighborSet(target, records)


def predict_many(scorer: SimilarityScorer, targets, labeled_ids, k: int,
                 tau: float, num_classes: int, threads: int = 1) -> np.ndarray:
    """Predicted class per target; scores only, no explanation records.

    Per-target work is independent and read-only over the scorer, so it can
    fan out across a thread pool (numpy releases the GIL in the matmuls).
    """
    targets = np.asarray(targets, dtype=np.int64)
    labeled_ids = np.asarray(labeled_ids, dtype=np.int64)
    labels = scorer.g.labels

    def one(t: int) -> int:
        cand = labeled_ids[labeled_ids != t]
        overall, _, _, _ = scorer.score(int(t), cand)
        order = np.lexsort((cand, -overall))[:min(k, cand.size)]
        z = np.exp((overall[order] - overall[order].max()) / tau)
        w = z / z.sum()
        dist = np.zeros(num_classes)
        np.add.at(dist, labels[cand[order]], w)
        return int(np.argmax(dist))

    if threads > 1 and targets.size > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return np.array(list(pool.map(one, targets)), dtype=np.int64)
    return np.array([one(t) for t in targets], dtype=np.int64)


def predict(ns: NeighborSet, tau: float, num_classes: int) -> Prediction:
    """Softmax-weighted vote over the neighbors' one-hot labels."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    scores = np.array([r.score.overall for r in ns.neighbors])
    z = np.exp((scores - scores.max()) / tau)
    weights = z / z.sum()
    dist = np.zeros(num_classes)
    for r, w in zip(ns.neighbors, weights):
        dist[r.label] += w
    return Prediction(dist, int(np.argmax(dist)), weights)


def edge_importance(n_target_edges: int, matchings: list[EdgeMatching]) -> np.ndarray:
    """Mean matched-pair similarity per target edge over the K neighbors;
    neighbors whose local graph has no edges contribute 0 for every edge."""
    if not matchings:
        raise ValueError("edge_importance: need at least one neighbor matching")
    imp = np.zeros(n_target_edges)
    for m in matchings:
        if m.pairs:
            imp += np.array([s for (_, _, s) in m.pairs])
    return imp / len(matchings)


def crucial_subgraph(importances: np.ndarray, threshold: float) -> list[int]:
    """Indices of edges with importance >= threshold, in sorted edge order."""
    if not -1.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [-1, 1]")
    return [int(i) for i in np.flatnonzero(importances >= threshold)]


def explain_target(scorer: SimilarityScorer, target: int, labeled_ids, k: int,
                   tau: float, num_classes: int,
                   crucial_frac: float = 0.8) -> Explanation:
    """Full explanation record for one target node.

    The crucial subgraph keeps edges with importance at least ``crucial_frac``
    times the target's maximum importance (raw importances are what metric
    code consumes; the threshold only shapes the rendered subgraph).
    """
    ns = k_nearest_labeled(scorer, target, labeled_ids, k)
    pred = predict(ns, tau, num_classes)
    t_idx = scorer.target_edge_ids(target)
    edges = scorer.g.edges[t_idx]
    imps = edge_importance(t_idx.size, [r.matching for r in ns.neighbors]) \
        if t_idx.size else np.zeros(0)
    crucial = []
    if imps.size:
        crucial = crucial_subgraph(imps, crucial_frac * float(imps.max()))
    return Explanation(target, pred, ns, edges, imps, crucial)


# ---------------------------------------------------------------------------
# serialization


def explanation_to_dict(exp: Explanation) -> dict:
    return {
        "target": exp.target,
        "predicted_class": exp.prediction.predicted_class,
        "distribution": [float(x) for x in exp.prediction.distribution],
        "neighbors": [
            {
                "id": r.node,
                "label": r.label,
                "s": r.score.overall,
                "s_n": r.score.node_sim,
                "s_e": r.score.struct_sim,
                "weight": float(w),
                "matching": [[int(ts), int(td), int(cs), int(cd), float(s)]
                             for (ts, td), (cs, cd), s in r.matching.pairs],
            }
            for r, w in zip(exp.neighbor_set.neighbors, exp.prediction.weights)
        ],
        "edge_importance": [[int(a), int(b), float(p)]
                            for (a, b), p in zip(exp.target_edges, exp.edge_importances)],
    }


def write_explanations(explanations: list[Explanation], path: str) -> None:
    records = [explanation_to_dict(e) for e in sorted(explanations, key=lambda e: e.target)]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(records, fh, indent=1)
        fh.write("\n")


def explanation_to_dot(exp: Explanation, neighbor_edges: dict | None = None) -> str:
    """Target and neighbor local graphs as clusters; matched edge pairs carry
    a shared integer label (one number per target edge).

    ``neighbor_edges`` maps a neighbor id to its full local-graph edge list;
    without it only the matched edges of each neighbor are drawn.
    """
    lines = [f"graph explanation_{exp.target} {{"]
    lines.append('  node [shape=circle, fontsize=10];')
    t_edges = [tuple(int(x) for x in e) for e in exp.target_edges]
    number = {e: i + 1 for i, e in enumerate(t_edges)}

    lines.append("  subgraph cluster_target {")
    lines.append(f'    label="target {exp.target}";')
    t_nodes = sorted({v for e in t_edges for v in e} | {exp.target})
    for v in t_nodes:
        shape = ', shape=doublecircle' if v == exp.target else ''
        lines.append(f'    t{v} [label="{v}"{shape}];')
    for (a, b) in t_edges:
        lines.append(f'    t{a} -- t{b} [label="{number[(a, b)]}"];')
    lines.append("  }")

    for j, rec in enumerate(exp.neighbor_set.neighbors):
        lines.append(f"  subgraph cluster_n{j} {{")
        lines.append(f'    label="neighbor {rec.node} (class {rec.label}, s={rec.score.overall:.3f})";')
        matched: dict[tuple[int, int], list[int]] = {}
        for t_edge, c_edge, _ in rec.matching.pairs:
            matched.setdefault(c_edge, []).append(number[t_edge])
        if neighbor_edges is not None and rec.node in neighbor_edges:
            shown = [tuple(int(x) for x in e) for e in neighbor_edges[rec.node]]
        else:
            shown = sorted(matched)
        c_nodes = {rec.node} | {v for e in shown for v in e}
        for v in sorted(c_nodes):
            shape = ', shape=doublecircle' if v == rec.node else ''
            lines.append(f'    n{j}_{v} [label="{v}"{shape}];')
        for (a, b) in shown:
            nums = matched.get((a, b))
            label = f' [label="{",".join(str(x) for x in sorted(nums))}"]' if nums else ""
            lines.append(f'    n{j}_{a} -- n{j}_{b}{label};')
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"
