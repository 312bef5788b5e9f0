"""Node representation function: a two-layer MLP plus one residual
graph-convolution layer, and mean-pooled edge embeddings on top of it."""

from __future__ import annotations

import struct

import numpy as np
import scipy.sparse as sp

from .autodiff import Tensor, add, csr_matmul, matmul, relu, xavier_init
from .graph import Graph, NormalizedAdjacency, Subgraph

MAGIC = b"SEGNN1\x00"


class EncoderParams:
    """The five trainable tensors: two MLP layers (with biases) and the
    graph-convolution weight (no bias)."""

    def __init__(self, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor, gw: Tensor):
        self.w1, self.b1, self.w2, self.b2, self.gw = w1, b1, w2, b2, gw

    @classmethod
    def init(cls, feature_dim: int, hidden: int, seed: int) -> "EncoderParams":
        ss = np.random.SeedSequence(seed).spawn(3)
        return cls(
            xavier_init(feature_dim, hidden, ss[0]),
            Tensor(np.zeros((1, hidden)), requires_grad=True),
            xavier_init(hidden, hidden, ss[1]),
            Tensor(np.zeros((1, hidden)), requires_grad=True),
            xavier_init(hidden, hidden, ss[2]),
        )

    @property
    def feature_dim(self) -> int:
        return self.w1.rows

    @property
    def hidden(self) -> int:
        return self.w1.cols

    def all(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2, self.gw]

    def copy(self) -> "EncoderParams":
        return EncoderParams(*[Tensor(t.data.copy(), requires_grad=t.requires_grad)
                               for t in self.all()])


class NodeEmbeddings:
    """Final embeddings ``h`` and the pre-aggregation MLP output ``h_m``."""

    def __init__(self, h: Tensor, h_m: Tensor):
        self.h = h
        self.h_m = h_m

    @property
    def values(self) -> np.ndarray:
        return self.h.data


def encode_features(x: Tensor, adj: NormalizedAdjacency, p: EncoderParams) -> NodeEmbeddings:
    """h_m = ReLU(ReLU(x W1 + b1) W2 + b2);  h = ReLU(A h_m W) + h_m."""
    if x.cols != p.feature_dim:
        raise ValueError(f"feature width {x.cols} does not match encoder ({p.feature_dim})")
    h_m = relu(add(matmul(relu(add(matmul(x, p.w1), p.b1)), p.w2), p.b2))
    h = add(relu(matmul(csr_matmul(adj.matrix, h_m), p.gw)), h_m)
    return NodeEmbeddings(h, h_m)


def encode_nodes(g: Graph, adj: NormalizedAdjacency, p: EncoderParams) -> NodeEmbeddings:
    return encode_features(Tensor(g.features), adj, p)


def embed_edges(sub: Subgraph, h: np.ndarray) -> np.ndarray:
    """One row per subgraph edge, in the subgraph's sorted edge order:
    the elementwise mean of the two endpoint embedding rows."""
    if sub.edge_count == 0:
        return np.zeros((0, h.shape[1]))
    return 0.5 * (h[sub.edges[:, 0]] + h[sub.edges[:, 1]])


def edge_incidence(edges: np.ndarray, node_count: int) -> sp.csr_matrix:
    """Constant (E x N) matrix with 0.5 at both endpoints of each edge, so
    ``incidence @ H`` produces all edge embeddings differentiably."""
    e = edges.shape[0]
    if e == 0:
        return sp.csr_matrix((0, node_count))
    rows = np.repeat(np.arange(e), 2)
    cols = edges.ravel()
    data = np.full(2 * e, 0.5)
    return sp.csr_matrix((data, (rows, cols)), shape=(e, node_count))


# ---------------------------------------------------------------------------
# model file format: MAGIC, u32 feature_dim, u32 hidden, five float64
# row-major tensors in declaration order, little-endian throughout


def save_model(p: EncoderParams, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", p.feature_dim, p.hidden))
        for t in p.all():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_model(path: str) -> EncoderParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: bad magic, not a model file")
    f_dim, hidden = struct.unpack_from("<II", blob, len(MAGIC))
    shapes = [(f_dim, hidden), (1, hidden), (hidden, hidden), (1, hidden), (hidden, hidden)]
    expect = len(MAGIC) + 8 + sum(r * c for r, c in shapes) * 8
    if len(blob) != expect:
        raise ValueError(f"{path}: expected {expect} bytes, found {len(blob)}")
    offset = len(MAGIC) + 8
    tensors = []
    for r, c in shapes:
        count = r * c
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(r, c)
        tensors.append(Tensor(arr.astype(np.float64), requires_grad=True))
        offset += count * 8
    return EncoderParams(*tensors)
