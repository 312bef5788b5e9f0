"""Synthetic benchmark construction with serialized ground truth.

Two generators mirror the evaluation datasets: a planted-motif perturbation
benchmark built from a citation-style source graph (node twins plus edge
correspondences) and a preferential-attachment graph with planted house
motifs (known explanation-relevant edges). A third generator produces an
offline citation-style stand-in source graph for environments where the real
Cora/Citeseer files are not available.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, canonical_edges, khop_subgraph


class GenerationError(RuntimeError):
    pass


@dataclass
class GroundTruth:
    """Correspondence tables emitted next to a generated dataset.

    ``twin_groups``: for every source motif node, the ids of its copies.
    ``edge_correspondence``: copy edge -> source edge, for copy edges that
    survived rewiring. ``motif_edges``: edges flagged explanation-relevant
    (house edges in the preferential-attachment benchmark).
    """

    twin_groups: list[list[int]] = field(default_factory=list)
    edge_correspondence: dict = field(default_factory=dict)
    motif_edges: list[tuple[int, int]] = field(default_factory=list)

    def save(self, path: str) -> None:
        payload = {
            "twin_groups": [sorted(int(v) for v in grp) for grp in self.twin_groups],
            "edge_correspondence": [
                {"copy": [int(c[0]), int(c[1])], "source": [int(s[0]), int(s[1])]}
                for c, s in sorted(self.edge_correspondence.items())
            ],
            "motif_edges": [[int(a), int(b)] for a, b in sorted(self.motif_edges)],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "GroundTruth":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls(
            twin_groups=[list(map(int, grp)) for grp in payload["twin_groups"]],
            edge_correspondence={
                (int(r["copy"][0]), int(r["copy"][1])): (int(r["source"][0]), int(r["source"][1]))
                for r in payload["edge_correspondence"]
            },
            motif_edges=[(int(a), int(b)) for a, b in payload["motif_edges"]],
        )

    def audit(self, g: Graph) -> None:
        """Raise if the tables are inconsistent with the generated graph."""
        seen: set[int] = set()
        for grp in self.twin_groups:
            ids = set(grp)
            if ids & seen:
                raise GenerationError("twin groups are not disjoint")
            if any(not 0 <= v < g.node_count for v in ids):
                raise GenerationError("twin group references missing node")
            seen |= ids
        edge_set = {(int(a), int(b)) for a, b in g.edges}
        for copy_edge in self.edge_correspondence:
            if copy_edge not in edge_set:
                raise GenerationError(f"correspondence references missing edge {copy_edge}")
        for e in self.motif_edges:
            if tuple(e) not in edge_set:
                raise GenerationError(f"motif edge {e} not in graph")


def _mask_rows(features: np.ndarray, rate: float, rng) -> np.ndarray:
    """Zero a uniform ``rate`` fraction of columns per row, independently."""
    n, f = features.shape
    k = int(round(rate * f))
    out = features.copy()
    if k > 0:
        cols = np.argpartition(rng.random((n, f)), k - 1, axis=1)[:, :k]
        out[np.arange(n)[:, None], cols] = 0.0
    return out


# ---------------------------------------------------------------------------
# preferential attachment + planted houses


def gen_ba_graph(n: int, m: int, rng) -> np.ndarray:
    """Preferential-attachment edge list: an m-clique seed, then each new
    node attaches to m distinct existing nodes with probability proportional
    to current degree. Returns canonical (E, 2) pairs."""
    if not n > m >= 1:
        raise GenerationError(f"need n > m >= 1, got n={n} m={m}")
    rng = np.random.default_rng(rng) if isinstance(rng, int) else rng
    edges = [(i, j) for i in range(m) for j in range(i + 1, m)]
    degrees = np.zeros(n, dtype=np.float64)
    degrees[:m] = m - 1
    for v in range(m, n):
        targets: set[int] = set()
        weights = degrees[:v]
        total = weights.sum()
        if total == 0:  # degenerate 1-node seed: attach uniformly
            targets = {int(x) for x in rng.choice(v, size=m, replace=False)}
        else:
            probs = weights / total
            while len(targets) < m:
                targets.add(int(rng.choice(v, p=probs)))
        for u in sorted(targets):
            edges.append((u, v))
            degrees[u] += 1
        degrees[v] = m
    return canonical_edges(edges)


@dataclass
class BaShapesConfig:
    base_nodes: int = 300
    motifs: int = 80
    m: int = 13
    random_edges: int = 70
    train_frac: float = 0.8
    val_frac: float = 0.1


# house geometry: bottom pair, two walls, middle pair, two roof edges;
# local ids [b1, b2, m1, m2, t] with labels [3, 3, 2, 2, 1]
_HOUSE_EDGES = [(0, 1), (2, 0), (3, 1), (2, 3), (4, 2), (4, 3)]
_HOUSE_LABELS = [3, 3, 2, 2, 1]


def gen_ba_shapes(cfg: BaShapesConfig, rng) -> tuple[Graph, GroundTruth]:
    """Preferential-attachment base (label 0) plus house motifs (labels
    1/2/3 for top/middle/bottom), one attachment edge per house, and random
    perturbation edges. Features are degree and triangle count."""
    rng = np.random.default_rng(rng) if isinstance(rng, int) else rng
    base = [tuple(e) for e in gen_ba_graph(cfg.base_nodes, cfg.m, rng)] \
        if cfg.base_nodes > cfg.m else []
    edges = list(base)
    labels = [0] * cfg.base_nodes
    motif_edges = []
    n = cfg.base_nodes
    for _ in range(cfg.motifs):
        ids = list(range(n, n + 5))
        n += 5
        labels.extend(_HOUSE_LABELS)
        for a, b in _HOUSE_EDGES:
            e = (ids[a], ids[b])
            edges.append(e)
            motif_edges.append((min(e), max(e)))
        anchor = int(rng.integers(cfg.base_nodes))
        edges.append((anchor, ids[0]))
    existing = {(min(a, b), max(a, b)) for a, b in edges}
    added = 0
    while added < cfg.random_edges:
        a = int(rng.integers(n))
        b = int(rng.integers(n))
        if a == b:
            continue
        pair = (min(a, b), max(a, b))
        if pair in existing:
            continue
        existing.add(pair)
        edges.append(pair)
        added += 1

    edge_arr = canonical_edges(edges)
    adj = np.zeros((n, n), dtype=np.float64)
    adj[edge_arr[:, 0], edge_arr[:, 1]] = 1.0
    adj[edge_arr[:, 1], edge_arr[:, 0]] = 1.0
    degree = adj.sum(axis=1)
    triangles = np.diag(adj @ adj @ adj) / 2.0
    features = np.column_stack([degree, triangles])

    order = rng.permutation(n)
    n_train = int(round(cfg.train_frac * n))
    n_val = int(round(cfg.val_frac * n))
    train = order[:n_train]
    val = order[n_train:n_train + n_val]
    test = order[n_train + n_val:]
    g = Graph(features, edge_arr, np.array(labels),
              train_mask=train, val_mask=val, test_mask=test)
    gt = GroundTruth(motif_edges=sorted(set(motif_edges)))
    gt.audit(g)
    return g, gt


# ---------------------------------------------------------------------------
# motif-perturbation benchmark from a citation-style source graph


@dataclass
class SynCoraConfig:
    motifs_per_class: int = 3
    mask_levels: tuple = (0.0, 0.1, 0.2, 0.3)
    rewire_levels: tuple = (0.0, 0.1, 0.2)
    motif_hop: int = 2
    motif_min_nodes: int = 4
    motif_max_nodes: int = 8
    basis_nodes: int = 420
    attach_edges: int = 3
    train_frac: float = 0.3

    def schedule(self) -> list[tuple[float, float]]:
        return [(m, r) for m in self.mask_levels for r in self.rewire_levels]


def _motif_candidates(source: Graph, cfg: SynCoraConfig) -> dict[int, list]:
    """Centers whose local graph is class-pure and within the size bounds."""
    out: dict[int, list] = {c: [] for c in range(source.num_classes)}
    for v in range(source.node_count):
        lab = int(source.labels[v])
        if lab < 0:
            continue
        sub = khop_subgraph(source, v, cfg.motif_hop)
        if not cfg.motif_min_nodes <= sub.nodes.size <= cfg.motif_max_nodes:
            continue
        if np.all(source.labels[sub.nodes] == lab):
            out[lab].append((v, sub))
    return out


def gen_syn_cora(source: Graph, cfg: SynCoraConfig, rng) -> tuple[Graph, GroundTruth]:
    """Sample class-pure local-graph motifs from the source, emit perturbed
    copies per the noise schedule, attach them to a disjoint basis subgraph,
    and record twin groups plus edge correspondences."""
    rng = np.random.default_rng(rng) if isinstance(rng, int) else rng
    if source.num_classes < 2:
        raise GenerationError("source graph needs at least two classes")
    candidates = _motif_candidates(source, cfg)
    motifs = []
    for c in range(source.num_classes):
        pool = candidates[c]
        if len(pool) < cfg.motifs_per_class:
            raise GenerationError(
                f"class {c}: only {len(pool)} class-pure local graphs of size "
                f"{cfg.motif_min_nodes}..{cfg.motif_max_nodes} (need {cfg.motifs_per_class})")
        picks = rng.choice(len(pool), size=cfg.motifs_per_class, replace=False)
        for i in sorted(int(x) for x in picks):
            motifs.append((c, *pool[i]))

    motif_sources = set()
    for _, _, sub in motifs:
        motif_sources.update(int(v) for v in sub.nodes)

    # basis: BFS growth over non-motif source nodes, new seed per component
    avail = [v for v in range(source.node_count) if v not in motif_sources]
    if len(avail) < cfg.basis_nodes:
        raise GenerationError("source graph too small for a disjoint basis subgraph")
    basis: list[int] = []
    basis_set: set[int] = set()
    avail_set = set(avail)
    pool = list(avail)
    while len(basis) < cfg.basis_nodes and pool:
        seed = pool[int(rng.integers(len(pool)))]
        if seed in basis_set:
            pool.remove(seed)
            continue
        queue = [seed]
        basis.append(seed)
        basis_set.add(seed)
        while queue and len(basis) < cfg.basis_nodes:
            v = queue.pop(0)
            for u in source.neighbors(v):
                u = int(u)
                if u in avail_set and u not in basis_set:
                    basis.append(u)
                    basis_set.add(u)
                    queue.append(u)
                    if len(basis) >= cfg.basis_nodes:
                        break
        pool = [v for v in pool if v not in basis_set]
    basis = sorted(basis)
    basis_id = {v: i for i, v in enumerate(basis)}

    features = [source.features[basis]]
    labels = list(int(source.labels[v]) for v in basis)
    edges: list[tuple[int, int]] = []
    member = np.zeros(source.node_count, dtype=bool)
    member[basis] = True
    for a, b in source.edges:
        if member[a] and member[b]:
            edges.append((basis_id[int(a)], basis_id[int(b)]))

    twin_groups: dict[int, list[int]] = {}
    correspondence: dict = {}
    copy_nodes: list[int] = []
    next_id = len(basis)

    for cls, center, sub in motifs:
        src_nodes = [int(v) for v in sub.nodes]
        src_edges = [(int(a), int(b)) for a, b in sub.edges]
        for mask_rate, rewire_rate in cfg.schedule():
            local = {v: next_id + i for i, v in enumerate(src_nodes)}
            next_id += len(src_nodes)
            copy_nodes.extend(local.values())
            feats = _mask_rows(source.features[src_nodes], mask_rate, rng)
            features.append(feats)
            labels.extend([cls] * len(src_nodes))
            for v in src_nodes:
                twin_groups.setdefault(v, []).append(local[v])

            copy_edges = {(min(local[a], local[b]), max(local[a], local[b])): (min(a, b), max(a, b))
                          for a, b in src_edges}
            n_rewire = int(rewire_rate * len(src_edges))
            if n_rewire and len(src_nodes) > 2:
                keys = sorted(copy_edges)
                chosen = rng.choice(len(keys), size=min(n_rewire, len(keys)), replace=False)
                for ci in sorted(int(x) for x in chosen):
                    old = keys[ci]
                    kept = old[int(rng.integers(2))]
                    for _ in range(20):
                        other = next_id - len(src_nodes) + int(rng.integers(len(src_nodes)))
                        pair = (min(kept, other), max(kept, other))
                        if other != kept and pair not in copy_edges:
                            del copy_edges[old]
                            copy_edges[pair] = None  # rewired: no correspondence
                            break
            for pair, src in copy_edges.items():
                edges.append(pair)
                if src is not None:
                    correspondence[pair] = src

    n_total = next_id
    if cfg.attach_edges:
        present = {(min(a, b), max(a, b)) for a, b in edges}
        copy_arr = np.array(copy_nodes)
        copy_starts = 0
        for cls, center, sub in motifs:
            k = len(sub.nodes)
            for _ in cfg.schedule():
                ids = copy_arr[copy_starts:copy_starts + k]
                copy_starts += k
                placed = 0
                tries = 0
                while placed < cfg.attach_edges and tries < 1000:
                    tries += 1
                    a = int(ids[int(rng.integers(k))])
                    b = int(rng.integers(len(basis)))
                    pair = (min(a, b), max(a, b))
                    if pair in present:
                        continue
                    present.add(pair)
                    edges.append(pair)
                    placed += 1
                if placed < cfg.attach_edges:
                    raise GenerationError("could not place attachment edges")

    feats = np.vstack(features)
    n_train = int(round(cfg.train_frac * n_total))
    train = rng.choice(n_total, size=n_train, replace=False)
    train_set = set(int(v) for v in train)
    copy_set = set(copy_nodes)
    test = [v for v in range(n_total) if v in copy_set and v not in train_set]
    val = [v for v in range(len(basis)) if v not in train_set]
    g = Graph(feats, edges, np.array(labels),
              train_mask=np.array(sorted(train_set)),
              val_mask=np.array(val) if val else None,
              test_mask=np.array(test) if test else None)
    gt = GroundTruth(
        twin_groups=[twin_groups[v] for v in sorted(twin_groups)],
        edge_correspondence=correspondence,
    )
    gt.audit(g)
    return g, gt


# ---------------------------------------------------------------------------
# offline citation-style stand-in source graph


@dataclass
class CoraLikeConfig:
    """Shape parameters for the stand-in source graph. Defaults mimic the
    scale of the standard citation benchmark: 2708 nodes, ~5400 edges,
    1433 binary features, 7 classes, strong homophily, and small class-pure
    pockets (some as separate components, as in the real graph)."""

    nodes: int = 2708
    features: int = 1433
    classes: int = 7
    target_edges: int = 5400
    homophily: float = 0.9
    pockets_per_class: int = 8
    pocket_min: int = 4
    pocket_max: int = 7
    ones_per_row: int = 18
    train_per_class: int = 20
    val_nodes: int = 500
    test_nodes: int = 1000


def gen_cora_like(cfg: CoraLikeConfig, rng) -> Graph:
    rng = np.random.default_rng(rng) if isinstance(rng, int) else rng
    n, c = cfg.nodes, cfg.classes
    shares = np.array([0.13, 0.08, 0.15, 0.30, 0.16, 0.11, 0.07])[:c]
    shares = shares / shares.sum()
    labels = np.concatenate([np.full(int(round(s * n)), i) for i, s in enumerate(shares)])
    labels = labels[:n] if labels.size >= n else np.concatenate(
        [labels, np.full(n - labels.size, c - 1)])
    labels = labels[rng.permutation(n)].astype(np.int64)

    # class-pure pockets, detached from the background graph
    edges: list[tuple[int, int]] = []
    pocket_nodes: set[int] = set()
    by_class = {i: np.flatnonzero(labels == i) for i in range(c)}
    for cls in range(c):
        pool = [int(v) for v in by_class[cls]]
        for _ in range(cfg.pockets_per_class):
            size = int(rng.integers(cfg.pocket_min, cfg.pocket_max + 1))
            free = [v for v in pool if v not in pocket_nodes]
            if len(free) < size:
                break
            members = [free[int(i)] for i in rng.choice(len(free), size=size, replace=False)]
            pocket_nodes.update(members)
            for i in range(1, size):  # random tree plus one chord
                edges.append((members[i], members[int(rng.integers(i))]))
            if size >= 4:
                a, b = members[0], members[size - 1]
                edges.append((min(a, b), max(a, b)))

    background = np.array([v for v in range(n) if v not in pocket_nodes])
    bg_by_class = {i: background[labels[background] == i] for i in range(c)}
    present = {(min(a, b), max(a, b)) for a, b in edges}
    want = cfg.target_edges - len(edges)
    tries = 0
    while want > 0 and tries < cfg.target_edges * 50:
        tries += 1
        a = int(background[int(rng.integers(background.size))])
        if rng.random() < cfg.homophily:
            pool = bg_by_class[int(labels[a])]
        else:
            pool = background
        b = int(pool[int(rng.integers(pool.size))])
        if a == b:
            continue
        pair = (min(a, b), max(a, b))
        if pair in present:
            continue
        present.add(pair)
        edges.append(pair)
        want -= 1
    # attach background isolates so the graph has no stray nodes
    degree = np.zeros(n, dtype=np.int64)
    for a, b in edges:
        degree[a] += 1
        degree[b] += 1
    for v in background[degree[background] == 0]:
        pool = bg_by_class[int(labels[v])]
        pool = pool[pool != v]
        if pool.size == 0:
            pool = background[background != v]
        b = int(pool[int(rng.integers(pool.size))])
        pair = (min(int(v), b), max(int(v), b))
        if pair not in present:
            present.add(pair)
            edges.append(pair)

    feats = np.zeros((n, cfg.features), dtype=np.float64)
    block = cfg.features // (c + 1)
    shared_start = c * block
    for v in range(n):
        k_class = int(round(cfg.ones_per_row * 0.8))
        lo = int(labels[v]) * block
        cols = lo + rng.choice(block, size=min(k_class, block), replace=False)
        extra = shared_start + rng.choice(cfg.features - shared_start,
                                          size=cfg.ones_per_row - k_class, replace=False)
        feats[v, cols] = 1.0
        feats[v, extra] = 1.0

    order = rng.permutation(n)
    train: list[int] = []
    per_class = {i: 0 for i in range(c)}
    for v in order:
        if per_class[int(labels[v])] < cfg.train_per_class:
            train.append(int(v))
            per_class[int(labels[v])] += 1
    rest = [int(v) for v in order if v not in set(train)]
    val = rest[:cfg.val_nodes]
    test = rest[cfg.val_nodes:cfg.val_nodes + cfg.test_nodes]
    return Graph(feats, edges, labels,
                 train_mask=np.array(train), val_mask=np.array(val),
                 test_mask=np.array(test))
