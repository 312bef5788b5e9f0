"""Training loop: negative-sampled classification loss over full-similarity
scores, node/edge contrastive losses across two augmented views, and Adam
optimization with validation-accuracy early stopping."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .encoder import EncoderParams, NodeEmbeddings, edge_incidence, encode_features
from .explain import predict_many
from .graph import Graph, augment, normalize_adjacency
from .similarity import SimilarityScorer, SubgraphIndex


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    """Every knob of the objective plus optimizer and stopping settings.

    ``n_support`` of 0 means 2*k. ``match_edge_cap`` of 0 disables the
    local-graph edge cap (the cap keeps matching tractable on graphs with
    dense cores by retaining the edges nearest the subgraph center).
    """

    k: int = 25
    n_support: int = 0
    q_neg: int = 20
    q_node: int = 100
    q_edge: int = 100
    node_batch: int = 256
    edge_batch: int = 256
    alpha: float = 0.01
    beta: float = 0.01
    lam: float = 0.5
    tau: float = 1.0
    mask_rate: float = 0.2
    perturb_rate: float = 0.1
    hop: int = 2
    hidden: int = 64
    lr: float = 1e-3
    max_epochs: int = 300
    patience: int = 30
    val_every: int = 5
    match_edge_cap: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.n_support == 0:
            self.n_support = 2 * self.k
        if self.n_support <= self.k:
            raise ValueError("n_support must exceed k")
        for name in ("alpha", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("lam", "mask_rate", "perturb_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.hop < 1:
            raise ValueError("hop must be >= 1")


@dataclass
class SampledBatch:
    """One anchor's approximate nearest same-label nodes and sampled
    different-label negatives."""

    anchor: int
    positives: np.ndarray
    negatives: np.ndarray


@dataclass
class _AnchorPlan:
    batch: SampledBatch
    cand_ids: np.ndarray            # positives then negatives
    matches: list                   # per candidate: (matched edge ids, sims) or None
    t_edge_ids: np.ndarray


@dataclass
class TrainResult:
    params: EncoderParams
    log: list[dict] = field(default_factory=list)
    best_val_acc: float = float("nan")
    best_epoch: int = 0
    epochs_run: int = 0


def sample_training_batch(scorer: SimilarityScorer, labeled_ids, anchor: int,
                          cfg: TrainConfig, rng) -> SampledBatch:
    """Sample a support set of same-label nodes, keep the top-k by the
    current overall similarity, and draw uniform different-label negatives."""
    plan = _plan_anchor(scorer, labeled_ids, anchor, cfg, rng)
    if plan is None:
        raise ValueError(f"anchor {anchor} has no same-label labeled peer")
    return plan.batch


def _plan_anchor(scorer, labeled_ids, anchor, cfg, rng) -> _AnchorPlan | None:
    labels = scorer.g.labels
    labeled_ids = np.asarray(labeled_ids, dtype=np.int64)
    mine = labels[anchor]
    same = labeled_ids[(labels[labeled_ids] == mine) & (labeled_ids != anchor)]
    diff = labeled_ids[labels[labeled_ids] != mine]
    if diff.size == 0:
        raise ValueError("degenerate single-class labeled set: no negatives exist")
    if same.size == 0:
        return None
    support = rng.choice(same, size=min(cfg.n_support, same.size), replace=False)
    support = np.sort(support)
    negatives = np.sort(rng.choice(diff, size=min(cfg.q_neg, diff.size), replace=False))
    cand = np.concatenate([support, negatives])
    overall, _, _, matches = scorer.score(anchor, cand, want_matchings=True)
    sup_scores = overall[:support.size]
    top = np.lexsort((support, -sup_scores))[:min(cfg.k, support.size)]
    positives = support[top]
    order = np.concatenate([top, np.arange(support.size, cand.size)])
    return _AnchorPlan(
        batch=SampledBatch(anchor, positives, negatives),
        cand_ids=cand[order],
        matches=[matches[i] for i in order],
        t_edge_ids=scorer.target_edge_ids(anchor),
    )


def _ones_col(d: int) -> Tensor:
    return Tensor(np.ones((d, 1)))


def _pair_similarities(hn: Tensor, en: Tensor, anchor: int, plan: _AnchorPlan,
                       lam: float) -> Tensor:
    """Differentiable Eq.-7 similarities of the anchor vs plan.cand_ids,
    recomputed through the tape with the plan's frozen matching choices."""
    d = hn.cols
    m = plan.cand_ids.size
    q = ad.gather_rows(hn, np.array([anchor]))
    c = ad.gather_rows(hn, plan.cand_ids)
    node_sims = ad.matmul(ad.mul(c, q), _ones_col(d))
    if plan.t_edge_ids.size == 0:
        return ad.scalar_mul(node_sims, lam)
    t_parts, c_parts, lengths = [], [], np.zeros(m, dtype=np.int64)
    for i, match in enumerate(plan.matches):
        if match is not None:
            t_parts.append(plan.t_edge_ids)
            c_parts.append(match[0])
            lengths[i] = plan.t_edge_ids.size
    if not t_parts:
        return ad.scalar_mul(node_sims, lam)
    t_rows = ad.gather_rows(en, np.concatenate(t_parts))
    c_rows = ad.gather_rows(en, np.concatenate(c_parts))
    pair_dots = ad.matmul(ad.mul(t_rows, c_rows), _ones_col(d))
    struct_sims = ad.segment_mean(pair_dots, lengths)
    return ad.add(ad.scalar_mul(node_sims, lam), ad.scalar_mul(struct_sims, 1.0 - lam))


def classification_loss(hn: Tensor, en: Tensor, plans: list[_AnchorPlan],
                        cfg: TrainConfig) -> Tensor:
    """Mean over anchors of -log( sum_pos exp(s/tau) / sum_all exp(s/tau) )."""
    if not plans:
        raise ValueError("classification_loss: no anchor batches")
    total = None
    for plan in plans:
        sims = _pair_similarities(hn, en, plan.batch.anchor, plan, cfg.lam)
        z = ad.exp(ad.scalar_mul(sims, 1.0 / cfg.tau))
        n_pos = plan.batch.positives.size
        pos_row = np.zeros((1, plan.cand_ids.size))
        pos_row[0, :n_pos] = 1.0
        num = ad.matmul(Tensor(pos_row), z)
        den = ad.matmul(Tensor(np.ones((1, plan.cand_ids.size))), z)
        loss = ad.add(ad.log(den), ad.scalar_mul(ad.log(num), -1.0))
        total = loss if total is None else ad.add(total, loss)
    return ad.scalar_mul(total, 1.0 / len(plans))


def contrastive_loss(emb_a: Tensor, emb_b: Tensor, batch_ids: np.ndarray,
                     q: int, tau: float, rng) -> Tensor:
    """InfoNCE across two views over row-normalized embedding tensors.

    Queries come from view A; the positive is the same row in view B and the
    q negatives are uniform other rows of view B.
    """
    population = emb_b.rows
    batch_ids = np.asarray(batch_ids, dtype=np.int64)
    if batch_ids.size > population:
        raise ValueError("contrastive batch larger than population")
    if q < 0:
        raise ValueError("negative dictionary size must be >= 0")
    b = batch_ids.size
    d = emb_a.cols
    qv = ad.gather_rows(emb_a, batch_ids)
    pv = ad.gather_rows(emb_b, batch_ids)
    pos_sim = ad.matmul(ad.mul(qv, pv), _ones_col(d))
    exp_pos = ad.exp(ad.scalar_mul(pos_sim, 1.0 / tau))
    if q == 0 or population < 2:
        neg_total = Tensor(np.zeros((b, 1)))
    else:
        draws = rng.integers(0, population - 1, size=(b, q))
        draws = draws + (draws >= batch_ids[:, None])  # exclude the query row
        q_rep = ad.gather_rows(emb_a, np.repeat(batch_ids, q))
        negs = ad.gather_rows(emb_b, draws.ravel())
        neg_sim = ad.matmul(ad.mul(q_rep, negs), _ones_col(d))
        neg_total = ad.segment_sum(ad.exp(ad.scalar_mul(neg_sim, 1.0 / tau)),
                                   np.full(b, q))
    den = ad.add(exp_pos, neg_total)
    per_query = ad.add(ad.log(den), ad.scalar_mul(ad.log(exp_pos), -1.0))
    return ad.reduce_mean(per_query)


def _encode_view(view: Graph, params: EncoderParams) -> NodeEmbeddings:
    return encode_features(Tensor(view.features), normalize_adjacency(view), params)


def train(g: Graph, cfg: TrainConfig, progress=None) -> TrainResult:
    """Run the full optimization; returns the best-validation parameters.

    Per epoch: clean-graph embeddings drive the sampled classification loss;
    two fresh augmented views drive the node and edge contrastive losses; one
    Adam step on the combined objective. Early-stops when validation accuracy
    has not improved for ``patience`` epochs (checked every ``val_every``).
    """
    rng = np.random.default_rng(cfg.seed)
    adj = normalize_adjacency(g)
    params = EncoderParams.init(g.feature_dim, cfg.hidden, cfg.seed)
    opt = ad.AdamState(params.all(), lr=cfg.lr)
    sub_index = SubgraphIndex(g, cfg.hop, cfg.match_edge_cap)
    incidence = edge_incidence(g.edges, g.node_count)
    anchors = np.flatnonzero(g.train_mask)
    if anchors.size == 0:
        raise ValueError("train: graph has no train-mask nodes")
    labeled = anchors
    val_ids = np.flatnonzero(g.val_mask)
    use_views = cfg.alpha > 0 or cfg.beta > 0

    result = TrainResult(params=params)
    best_params = None
    best_acc = -1.0
    last_improve = 0
    ones_e = np.arange(g.edge_count)

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        with Tape() as tape:
            emb = encode_features(Tensor(g.features), adj, params)
            hn = ad.row_l2_normalize(emb.h)
            en = ad.row_l2_normalize(ad.csr_matmul(incidence, emb.h))
            scorer = SimilarityScorer(sub_index, emb.h.data, cfg.lam)
            plans = []
            for a in anchors:
                plan = _plan_anchor(scorer, labeled, int(a), cfg, rng)
                if plan is not None:
                    plans.append(plan)
            l_c = classification_loss(hn, en, plans, cfg)
            l_n_val = l_e_val = 0.0
            total = l_c
            if use_views:
                view_a = augment(augment(g, "attribute_mask", cfg.mask_rate, rng),
                                 "edge_perturb", cfg.perturb_rate, rng)
                view_b = augment(augment(g, "attribute_mask", cfg.mask_rate, rng),
                                 "edge_perturb", cfg.perturb_rate, rng)
                emb_a = _encode_view(view_a, params)
                emb_b = _encode_view(view_b, params)
                if cfg.alpha > 0:
                    hna = ad.row_l2_normalize(emb_a.h)
                    hnb = ad.row_l2_normalize(emb_b.h)
                    node_batch = np.sort(rng.choice(
                        g.node_count, size=min(cfg.node_batch, g.node_count), replace=False))
                    l_n = contrastive_loss(hna, hnb, node_batch, cfg.q_node, cfg.tau, rng)
                    l_n_val = l_n.item()
                    total = ad.add(total, ad.scalar_mul(l_n, cfg.alpha))
                if cfg.beta > 0 and g.edge_count:
                    ena = ad.row_l2_normalize(ad.csr_matmul(incidence, emb_a.h))
                    enb = ad.row_l2_normalize(ad.csr_matmul(incidence, emb_b.h))
                    edge_batch = np.sort(rng.choice(
                        ones_e, size=min(cfg.edge_batch, g.edge_count), replace=False))
                    l_e = contrastive_loss(ena, enb, edge_batch, cfg.q_edge, cfg.tau, rng)
                    l_e_val = l_e.item()
                    total = ad.add(total, ad.scalar_mul(l_e, cfg.beta))
            total_val = total.item()
            if not np.isfinite(total_val):
                raise TrainingDiverged(epoch)
            tape.backward(total)
        ad.adam_step(params.all(), opt)

        val_acc = ""
        if val_ids.size and (epoch % cfg.val_every == 0 or epoch == cfg.max_epochs):
            emb_now = encode_features(Tensor(g.features), adj, params)
            val_scorer = SimilarityScorer(sub_index, emb_now.h.data, cfg.lam)
            preds = predict_many(val_scorer, val_ids, labeled, cfg.k, cfg.tau,
                                 g.num_classes)
            acc = float(np.mean(preds == g.labels[val_ids]))
            val_acc = acc
            if acc > best_acc:
                best_acc = acc
                best_params = params.copy()
                result.best_epoch = epoch
                last_improve = epoch
        row = {"epoch": epoch, "L_c": l_c.item(), "L_n": l_n_val, "L_e": l_e_val,
               "total": total_val, "val_acc": val_acc,
               "seconds": time.perf_counter() - t0}
        result.log.append(row)
        if progress is not None:
            progress(row)
        result.epochs_run = epoch
        if val_ids.size and epoch - max(last_improve, cfg.val_every) >= cfg.patience:
            break

    result.params = best_params if best_params is not None else params
    result.best_val_acc = best_acc if best_acc >= 0 else float("nan")
    return result


def write_train_log(rows: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,L_c,L_n,L_e,total,val_acc,seconds\n")
        for r in rows:
            val = r["val_acc"]
            val = f"{val:.6f}" if val != "" else ""
            fh.write(f"{r['epoch']},{r['L_c']:.8f},{r['L_n']:.8f},{r['L_e']:.8f},"
                     f"{r['total']:.8f},{val},{r['seconds']:.3f}\n")
