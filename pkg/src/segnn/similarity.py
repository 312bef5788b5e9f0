"""Interpretable similarity: node-level cosine, greedy cross-subgraph edge
matching, local structure similarity and their weighted fusion.

The expensive part is edge matching, which compares every edge embedding of
the target's local graph against every edge embedding of a candidate's local
graph. :class:`SimilarityScorer` batches that work across candidates with one
matrix product per target and chunks it to bound memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import embed_edges
from .graph import Graph, Subgraph, khop_subgraph


def normalize_rows(m: np.ndarray) -> np.ndarray:
    """Unit-L2 rows; zero rows stay zero."""
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return m / np.where(norms > 0.0, norms, 1.0)


def node_similarity(h_t: np.ndarray, h_l: np.ndarray) -> float:
    """Cosine similarity of two embedding rows; 0 if either is the zero vector."""
    h_t = np.asarray(h_t, dtype=np.float64).ravel()
    h_l = np.asarray(h_l, dtype=np.float64).ravel()
    if h_t.shape != h_l.shape:
        raise ValueError(f"dimension mismatch: {h_t.shape} vs {h_l.shape}")
    nt = np.linalg.norm(h_t)
    nl = np.linalg.norm(h_l)
    if nt == 0.0 or nl == 0.0:
        return 0.0
    return float(h_t @ h_l / (nt * nl))


@dataclass
class EdgeMatching:
    """For each target-subgraph edge, the best-matching candidate edge and
    the cosine similarity of their embeddings."""

    target: int
    candidate: int
    pairs: list[tuple[tuple[int, int], tuple[int, int], float]]


@dataclass
class SimilarityScore:
    node_sim: float
    struct_sim: float
    lam: float

    @property
    def overall(self) -> float:
        return self.lam * self.node_sim + (1.0 - self.lam) * self.struct_sim


def match_edges(target_vecs: np.ndarray, candidate_vecs: np.ndarray):
    """Per target edge, the argmax-cosine candidate edge.

    Returns ``(indices, sims)`` with one entry per target edge; ties break
    toward the lowest candidate index (earliest in sorted edge order), and a
    candidate edge may be matched any number of times. Returns ``None`` when
    the candidate set is empty (no-structure condition: the caller maps it
    to structure similarity 0).
    """
    if target_vecs.shape[0] == 0:
        raise ValueError("match_edges: empty target edge set (caller handles this case)")
    if candidate_vecs.shape[0] == 0:
        return None
    c = normalize_rows(target_vecs) @ normalize_rows(candidate_vecs).T
    idx = np.argmax(c, axis=1)
    sims = c[np.arange(c.shape[0]), idx]
    return idx, sims


def structure_similarity(sims) -> float:
    """Mean matched-pair similarity; 0 when either subgraph has no edges."""
    if sims is None or len(sims) == 0:
        return 0.0
    return float(np.mean(sims))


def overall_similarity(g: Graph, h: np.ndarray, v_t: int, v_l: int,
                       lam: float, hop: int) -> tuple[SimilarityScore, EdgeMatching]:
    """Score one pair of nodes from scratch (no caching); used by tests and
    one-off queries. Bulk scoring goes through :class:`SimilarityScorer`."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda {lam} outside [0, 1]")
    sub_t = khop_subgraph(g, v_t, hop)
    sub_l = khop_subgraph(g, v_l, hop)
    ns = node_similarity(h[v_t], h[v_l])
    matching = EdgeMatching(v_t, v_l, [])
    ss = 0.0
    if sub_t.edge_count and sub_l.edge_count:
        et = embed_edges(sub_t, h)
        el = embed_edges(sub_l, h)
        idx, sims = match_edges(et, el)
        ss = structure_similarity(sims)
        for i, (j, s) in enumerate(zip(idx, sims)):
            matching.pairs.append((tuple(sub_t.edges[i]), tuple(sub_l.edges[j]), float(s)))
    return SimilarityScore(ns, ss, lam), matching


class SubgraphIndex:
    """Caches each node's local-graph edge ids (positions in the parent's
    canonical edge array), optionally capped to the ``edge_cap`` edges nearest
    the center (BFS depth of the closer endpoint, then sorted order)."""

    def __init__(self, g: Graph, hop: int, edge_cap: int = 0):
        self.g = g
        self.hop = hop
        self.edge_cap = edge_cap
        self._edge_ids: dict[int, np.ndarray] = {}
        self._full: dict[int, Subgraph] = {}

    def subgraph(self, v: int) -> Subgraph:
        sub = self._full.get(v)
        if sub is None:
            sub = khop_subgraph(self.g, v, self.hop)
            self._full[v] = sub
        return sub

    def edge_ids(self, v: int) -> np.ndarray:
        ids = self._edge_ids.get(v)
        if ids is None:
            sub = self.subgraph(v)
            ids = sub.edge_index
            if self.edge_cap and ids.size > self.edge_cap:
                depth_of = dict(zip(sub.nodes.tolist(), sub.node_depth.tolist()))
                d = np.array([min(depth_of[int(a)], depth_of[int(b)])
                              for a, b in sub.edges])
                order = np.argsort(d, kind="stable")[:self.edge_cap]
                ids = np.sort(ids[order])
            self._edge_ids[v] = ids
        return ids


class SimilarityScorer:
    """Batched Eq.-style scoring of one target against many candidates under
    a fixed embedding matrix. Rebuild whenever the embeddings change."""

    # upper bound on scratch cells per cosine block (float64)
    _CELL_BUDGET = 8_000_000

    def __init__(self, index: SubgraphIndex, h: np.ndarray,
                 lam: float, cap_targets: bool = True):
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda {lam} outside [0, 1]")
        self.index = index
        self.g = index.g
        self.h = h
        self.lam = lam
        self.cap_targets = cap_targets
        self.hn = normalize_rows(h)
        edges = self.g.edges
        if edges.size:
            self.edge_emb = 0.5 * (h[edges[:, 0]] + h[edges[:, 1]])
            self.en = normalize_rows(self.edge_emb)
        else:
            self.edge_emb = np.zeros((0, h.shape[1]))
            self.en = self.edge_emb

    def target_edge_ids(self, t: int) -> np.ndarray:
        if self.cap_targets:
            return self.index.edge_ids(t)
        return self.index.subgraph(t).edge_index

    def node_sims(self, t: int, cand_ids: np.ndarray) -> np.ndarray:
        return self.hn[cand_ids] @ self.hn[t]

    def struct_sims(self, t: int, cand_ids, want_matchings: bool = False):
        """Structure similarity of ``t`` vs each candidate.

        Returns ``(sims, matches)``; ``matches`` is None unless requested,
        else one ``(matched_edge_ids, pair_sims)`` per candidate (None for
        candidates without edges or when the target has no edges).
        """
        cand_ids = np.asarray(cand_ids, dtype=np.int64)
        m = cand_ids.shape[0]
        out = np.zeros(m)
        matches: list | None = [None] * m if want_matchings else None
        t_idx = self.target_edge_ids(t)
        if t_idx.size == 0:
            return out, matches
        tn = self.en[t_idx]
        cand_edge_ids = [self.index.edge_ids(int(c)) for c in cand_ids]
        cols_per_chunk = max(1, self._CELL_BUDGET // max(t_idx.size, 1))
        start = 0
        while start < m:
            stop = start
            cols = 0
            while stop < m and (stop == start or cols + cand_edge_ids[stop].size <= cols_per_chunk):
                cols += cand_edge_ids[stop].size
                stop += 1
            chunk = [cand_edge_ids[i] for i in range(start, stop)]
            lengths = np.array([c.size for c in chunk])
            if cols:
                big = np.concatenate([c for c in chunk if c.size])
                c_all = tn @ self.en[big].T
            offset = 0
            for i, n_edges in enumerate(lengths):
                if n_edges == 0:
                    offset += 0
                    continue
                block = c_all[:, offset:offset + n_edges]
                am = np.argmax(block, axis=1)
                sims = block[np.arange(block.shape[0]), am]
                out[start + i] = sims.mean()
                if want_matchings:
                    matches[start + i] = (chunk[i][am], sims)
                offset += n_edges
            start = stop
        return out, matches

    def score(self, t: int, cand_ids, want_matchings: bool = False):
        """Overall similarity of ``t`` against each candidate id."""
        cand_ids = np.asarray(cand_ids, dtype=np.int64)
        ns = self.node_sims(t, cand_ids)
        ss, matches = self.struct_sims(t, cand_ids, want_matchings)
        overall = self.lam * ns + (1.0 - self.lam) * ss
        return overall, ns, ss, matches

    def matching_record(self, t: int, candidate: int, match) -> EdgeMatching:
        """Expand a ``(matched_edge_ids, sims)`` pair into an EdgeMatching."""
        rec = EdgeMatching(t, int(candidate), [])
        if match is not None:
            t_idx = self.target_edge_ids(t)
            edges = self.g.edges
            for eid_t, eid_c, s in zip(t_idx, match[0], match[1]):
                rec.pairs.append((tuple(int(x) for x in edges[eid_t]),
                                  tuple(int(x) for x in edges[eid_c]),
                                  float(s)))
        return rec
