"""Graph data model, dataset IO, normalized adjacency and augmentations.

Graphs are undirected and unweighted. Edges are kept canonical: each pair is
stored once as ``(min, max)`` and the edge array is lexicographically sorted,
so subgraph extraction and serialized explanations are reproducible.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp

SPLITS = ("train", "val", "test", "none")


class DatasetError(ValueError):
    """Malformed dataset directory or violated graph invariant."""


def canonical_edges(pairs) -> np.ndarray:
    """Sorted unique (min, max) pairs as an (E, 2) int64 array."""
    arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if arr.size == 0:
        return arr.reshape(0, 2)
    lo = arr.min(axis=1)
    hi = arr.max(axis=1)
    arr = np.unique(np.column_stack([lo, hi]), axis=0)
    return arr


class Graph:
    """Attributed undirected graph with labels and train/val/test masks.

    ``labels[i] == -1`` means node i is unlabeled. Instances are treated as
    immutable after construction; augmentations return fresh copies.
    """

    def __init__(self, features, edges, labels=None, train_mask=None,
                 val_mask=None, test_mask=None, validate: bool = True):
        self.features = np.asarray(features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DatasetError(f"features must be 2-D, got {self.features.shape}")
        n = self.features.shape[0]
        self.edges = canonical_edges(edges)
        self.labels = (np.full(n, -1, dtype=np.int64) if labels is None
                       else np.asarray(labels, dtype=np.int64))
        self.train_mask = self._mask(train_mask, n)
        self.val_mask = self._mask(val_mask, n)
        self.test_mask = self._mask(test_mask, n)
        self._adj = None
        if validate:
            self.validate()

    @staticmethod
    def _mask(m, n) -> np.ndarray:
        if m is None:
            return np.zeros(n, dtype=bool)
        m = np.asarray(m)
        if m.dtype != bool:
            out = np.zeros(n, dtype=bool)
            out[np.asarray(m, dtype=np.int64)] = True
            return out
        return m.copy()

    @property
    def node_count(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        labeled = self.labels[self.labels >= 0]
        return int(labeled.max()) + 1 if labeled.size else 0

    @property
    def edge_count(self) -> int:
        return self.edges.shape[0]

    def validate(self) -> None:
        n = self.node_count
        if self.labels.shape != (n,):
            raise DatasetError("labels length does not match node count")
        for m in (self.train_mask, self.val_mask, self.test_mask):
            if m.shape != (n,):
                raise DatasetError("mask length does not match node count")
        if self.edges.size:
            if self.edges.min() < 0 or self.edges.max() >= n:
                raise DatasetError("edge endpoint out of range")
            if np.any(self.edges[:, 0] == self.edges[:, 1]):
                raise DatasetError("self-loop edge")
        if (self.train_mask & self.val_mask).any() or \
           (self.train_mask & self.test_mask).any() or \
           (self.val_mask & self.test_mask).any():
            raise DatasetError("train/val/test masks overlap")
        if np.any(self.labels[self.train_mask] < 0):
            raise DatasetError("train-mask node without label")

    # -- adjacency ----------------------------------------------------------

    def adjacency(self) -> sp.csr_matrix:
        """Binary symmetric adjacency (no self loops), cached."""
        if self._adj is None:
            n = self.node_count
            if self.edges.size:
                r = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
                c = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
                data = np.ones(r.shape[0])
                self._adj = sp.csr_matrix((data, (r, c)), shape=(n, n))
            else:
                self._adj = sp.csr_matrix((n, n))
        return self._adj

    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency().sum(axis=1)).ravel().astype(np.int64)

    def neighbors(self, v: int) -> np.ndarray:
        a = self.adjacency()
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    def copy_with(self, features=None, edges=None) -> "Graph":
        return Graph(self.features if features is None else features,
                     self.edges if edges is None else edges,
                     self.labels, self.train_mask, self.val_mask, self.test_mask)

    def labeled_ids(self) -> np.ndarray:
        """Training-mask node ids: the labeled pool used for retrieval."""
        return np.flatnonzero(self.train_mask)

    def equals(self, other: "Graph") -> bool:
        return (np.array_equal(self.features, other.features)
                and np.array_equal(self.edges, other.edges)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.train_mask, other.train_mask)
                and np.array_equal(self.val_mask, other.val_mask)
                and np.array_equal(self.test_mask, other.test_mask))


class NormalizedAdjacency:
    """Symmetric degree-normalized adjacency with self loops.

    Entry (i, j) is 1/sqrt((d_i + 1) (d_j + 1)) for every edge of A + I,
    with d the raw degree. Stored in compressed sparse row form.
    """

    def __init__(self, matrix: sp.csr_matrix):
        self.matrix = matrix

    @property
    def node_count(self) -> int:
        return self.matrix.shape[0]

    def entry(self, i: int, j: int) -> float:
        return float(self.matrix[i, j])

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


def normalize_adjacency(g: Graph) -> NormalizedAdjacency:
    a = g.adjacency()
    n = g.node_count
    a_hat = (a + sp.identity(n, format="csr")).tocsr()
    inv_sqrt = 1.0 / np.sqrt(g.degrees() + 1.0)
    d = sp.diags(inv_sqrt)
    return NormalizedAdjacency((d @ a_hat @ d).tocsr())


class Subgraph:
    """n-hop neighborhood of a center node with induced edges.

    ``edge_index`` holds the positions of the induced edges inside the parent
    graph's canonical edge array, so edge embeddings can be looked up without
    re-deriving pair identities. Edge order follows the parent's sorted order.
    """

    __slots__ = ("center", "hop", "nodes", "edges", "edge_index", "node_depth")

    def __init__(self, center, hop, nodes, edges, edge_index, node_depth):
        self.center = center
        self.hop = hop
        self.nodes = nodes
        self.edges = edges
        self.edge_index = edge_index
        self.node_depth = node_depth

    @property
    def edge_count(self) -> int:
        return self.edges.shape[0]


def khop_subgraph(g: Graph, center: int, n: int) -> Subgraph:
    """BFS out to depth ``n`` and keep all parent edges inside the frontier."""
    if not (0 <= center < g.node_count):
        raise DatasetError(f"center {center} out of range")
    if n < 1:
        raise DatasetError("hop count must be >= 1")
    depth = {center: 0}
    frontier = [center]
    for d in range(1, n + 1):
        nxt = []
        for v in frontier:
            for u in g.neighbors(v):
                u = int(u)
                if u not in depth:
                    depth[u] = d
                    nxt.append(u)
        frontier = nxt
        if not frontier:
            break
    nodes = np.array(sorted(depth), dtype=np.int64)
    member = np.zeros(g.node_count, dtype=bool)
    member[nodes] = True
    if g.edges.size:
        inside = member[g.edges[:, 0]] & member[g.edges[:, 1]]
        edge_index = np.flatnonzero(inside)
    else:
        edge_index = np.zeros(0, dtype=np.int64)
    edges = g.edges[edge_index]
    node_depth = np.array([depth[int(v)] for v in nodes], dtype=np.int64)
    return Subgraph(center, n, nodes, edges, edge_index, node_depth)


# ---------------------------------------------------------------------------
# augmentations


def augment(g: Graph, mode: str, rate: float, rng) -> Graph:
    """Stochastic graph augmentation; the input graph is untouched.

    ``attribute_mask`` zeroes a uniformly chosen ``rate`` fraction of feature
    columns per node, independently per node. ``edge_perturb`` removes
    ``floor(rate * E)`` uniformly chosen edges and inserts the same number of
    uniformly chosen previously-absent non-self-loop pairs.
    """
    if not 0.0 <= rate <= 1.0:
        raise DatasetError(f"augmentation rate {rate} outside [0, 1]")
    rng = np.random.default_rng(rng) if isinstance(rng, int) else rng
    if mode == "attribute_mask":
        n, f = g.features.shape
        k = int(round(rate * f))
        feats = g.features.copy()
        if k > 0:
            scores = rng.random((n, f))
            cols = np.argpartition(scores, k - 1, axis=1)[:, :k]
            feats[np.arange(n)[:, None], cols] = 0.0
        return g.copy_with(features=feats)
    if mode == "edge_perturb":
        e = g.edge_count
        k = int(rate * e)
        if k == 0:
            return g.copy_with(edges=g.edges.copy())
        keep = np.ones(e, dtype=bool)
        keep[rng.choice(e, size=k, replace=False)] = False
        existing = {(int(a), int(b)) for a, b in g.edges}
        new_pairs = []
        added = set()
        n = g.node_count
        while len(new_pairs) < k:
            a = int(rng.integers(n))
            b = int(rng.integers(n))
            if a == b:
                continue
            pair = (min(a, b), max(a, b))
            if pair in existing or pair in added:
                continue
            added.add(pair)
            new_pairs.append(pair)
        edges = np.vstack([g.edges[keep], np.array(new_pairs, dtype=np.int64)])
        return g.copy_with(edges=canonical_edges(edges))
    raise DatasetError(f"unknown augmentation mode {mode!r}")


def largest_connected_component(g: Graph) -> tuple[Graph, np.ndarray]:
    """Restrict to the largest component; returns (graph, kept old node ids)."""
    ncomp, comp = sp.csgraph.connected_components(g.adjacency(), directed=False)
    sizes = np.bincount(comp, minlength=ncomp)
    keep = np.flatnonzero(comp == sizes.argmax())
    return induced_subgraph(g, keep), keep


def induced_subgraph(g: Graph, keep: np.ndarray) -> Graph:
    keep = np.asarray(sorted(set(int(v) for v in keep)), dtype=np.int64)
    remap = -np.ones(g.node_count, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    member = remap >= 0
    if g.edges.size:
        inside = member[g.edges[:, 0]] & member[g.edges[:, 1]]
        edges = remap[g.edges[inside]]
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
    return Graph(g.features[keep], edges, g.labels[keep],
                 g.train_mask[keep], g.val_mask[keep], g.test_mask[keep])


# ---------------------------------------------------------------------------
# on-disk format: nodes.tsv / edges.tsv / features.csv


def load_dataset(directory: str, strict_isolated: bool = False) -> Graph:
    """Read a dataset directory; see the package README for the file layout."""
    nodes_path = os.path.join(directory, "nodes.tsv")
    edges_path = os.path.join(directory, "edges.tsv")
    feats_path = os.path.join(directory, "features.csv")
    for p in (nodes_path, edges_path, feats_path):
        if not os.path.isfile(p):
            raise DatasetError(f"missing dataset file: {p}")

    ids, labels, splits = [], [], []
    with open(nodes_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DatasetError(f"{nodes_path}:{lineno}: expected id<TAB>label<TAB>split")
            try:
                ids.append(int(parts[0]))
                labels.append(-1 if parts[1] == "-" else int(parts[1]))
            except ValueError:
                raise DatasetError(f"{nodes_path}:{lineno}: malformed integer") from None
            if parts[2] not in SPLITS:
                raise DatasetError(f"{nodes_path}:{lineno}: unknown split {parts[2]!r}")
            splits.append(parts[2])
    n = len(ids)
    if sorted(ids) != list(range(n)):
        raise DatasetError(f"{nodes_path}: node ids must be exactly 0..{n - 1}")
    order = np.argsort(np.asarray(ids))
    labels = np.asarray(labels, dtype=np.int64)[order]
    splits = [splits[i] for i in order]

    pairs = []
    with open(edges_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetError(f"{edges_path}:{lineno}: expected src<TAB>dst")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise DatasetError(f"{edges_path}:{lineno}: malformed integer") from None
            if a == b:
                raise DatasetError(f"{edges_path}:{lineno}: self-loop {a}")
            if not (0 <= a < n and 0 <= b < n):
                raise DatasetError(f"{edges_path}:{lineno}: endpoint out of range")
            pairs.append((a, b))

    try:
        features = np.loadtxt(feats_path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as e:
        raise DatasetError(f"{feats_path}: {e}") from None
    if features.shape[0] != n:
        raise DatasetError(f"{feats_path}: {features.shape[0]} rows for {n} nodes")

    g = Graph(features, pairs, labels,
              train_mask=np.array([s == "train" for s in splits]),
              val_mask=np.array([s == "val" for s in splits]),
              test_mask=np.array([s == "test" for s in splits]))
    if strict_isolated:
        isolated = np.flatnonzero(g.degrees() == 0)
        if isolated.size:
            raise DatasetError(f"{isolated.size} isolated node(s), first: {isolated[:5].tolist()}")
    return g


def save_dataset(g: Graph, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "nodes.tsv"), "w", encoding="utf-8") as fh:
        for i in range(g.node_count):
            label = "-" if g.labels[i] < 0 else str(int(g.labels[i]))
            if g.train_mask[i]:
                split = "train"
            elif g.val_mask[i]:
                split = "val"
            elif g.test_mask[i]:
                split = "test"
            else:
                split = "none"
            fh.write(f"{i}\t{label}\t{split}\n")
    with open(os.path.join(directory, "edges.tsv"), "w", encoding="utf-8") as fh:
        for a, b in g.edges:
            fh.write(f"{a}\t{b}\n")
    with open(os.path.join(directory, "features.csv"), "w", encoding="utf-8") as fh:
        for row in g.features:
            fh.write(",".join(repr(float(x)) for x in row))
            fh.write("\n")
