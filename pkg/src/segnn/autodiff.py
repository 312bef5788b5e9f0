"""Minimal reverse-mode autodiff over dense float64 matrices.

Everything is a 2-D tensor (scalars are 1x1, vectors are 1xN). Primitives
record themselves on the active :class:`Tape`; ``Tape.backward`` replays the
recording in reverse. Forward execution order is a topological order, so a
single reverse sweep visits every recorded application exactly once.

The op set is deliberately small: just enough to express a two-layer MLP,
one graph-convolution layer, cosine similarities and log-ratio losses.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    """Operand shapes incompatible with a primitive."""


class ContractError(ValueError):
    """An operation was called outside its contract."""


class Tensor:
    """Dense float64 matrix with an optional accumulated gradient."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def clear_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class _Entry:
    __slots__ = ("out", "inputs", "fn")

    def __init__(self, out, inputs, fn):
        self.out = out
        self.inputs = inputs
        self.fn = fn


_ACTIVE: list["Tape"] = []


def _active_tape() -> "Tape | None":
    return _ACTIVE[-1] if _ACTIVE else None


class Tape:
    """Recording of primitive applications, replayed in reverse by backward.

    Use as a context manager around the forward pass::

        with Tape() as tape:
            loss = reduce_mean(relu(matmul(x, w)))
        tape.backward(loss)

    Recording is single-threaded; tensors created outside a tape are plain
    immutable values.
    """

    def __init__(self):
        self._entries: list[_Entry] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _ACTIVE.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], fn) -> None:
        """Append one application; ``fn(out_grad)`` accumulates into inputs."""
        out.requires_grad = True
        self._entries.append(_Entry(out, inputs, fn))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(t) into ``t.grad`` for every recorded tensor.

        Tensors recorded on the tape but not feeding into ``loss`` receive
        zero gradients. Raises if ``loss`` is not scalar or was not produced
        under this tape.
        """
        if loss.data.shape != (1, 1):
            raise ContractError(f"backward needs a 1x1 loss, got {loss.data.shape}")
        if not any(e.out is loss for e in self._entries):
            raise ContractError("loss tensor is not connected to this tape")
        loss.grad = np.ones((1, 1))
        for entry in reversed(self._entries):
            g = entry.out.grad
            if g is not None:
                entry.fn(g)
        # off-path participants still satisfy the zero-gradient contract
        for entry in self._entries:
            for t in entry.inputs:
                if t.requires_grad and t.grad is None:
                    t.grad = np.zeros_like(t.data)
            if entry.out.grad is None:
                entry.out.grad = np.zeros_like(entry.out.data)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _wants_grad(*ts: Tensor) -> Tape | None:
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in ts):
        return tape
    return None


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)
    tape = _wants_grad(a, b)
    if tape:
        def back(g, a=a, b=b):
            if a.requires_grad:
                _accum(a, g @ b.data.T)
            if b.requires_grad:
                _accum(b, a.data.T @ g)
        tape.record(out, (a, b), back)
    return out


def _broadcast_pair(name, a, b):
    """Allow equal shapes or a 1xN row vector against an MxN matrix."""
    if a.shape == b.shape:
        return None
    if a.cols == b.cols and b.rows == 1:
        return "b"
    if a.cols == b.cols and a.rows == 1:
        return "a"
    raise ShapeError(f"{name}: {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    which = _broadcast_pair("add", a, b)
    out = Tensor(a.data + b.data)
    tape = _wants_grad(a, b)
    if tape:
        def back(g, a=a, b=b, which=which):
            if a.requires_grad:
                _accum(a, g.sum(axis=0, keepdims=True) if which == "a" else g)
            if b.requires_grad:
                _accum(b, g.sum(axis=0, keepdims=True) if which == "b" else g)
        tape.record(out, (a, b), back)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product (same broadcast rule as add)."""
    which = _broadcast_pair("mul", a, b)
    out = Tensor(a.data * b.data)
    tape = _wants_grad(a, b)
    if tape:
        def back(g, a=a, b=b, which=which):
            if a.requires_grad:
                ga = g * b.data
                _accum(a, ga.sum(axis=0, keepdims=True) if which == "a" else ga)
            if b.requires_grad:
                gb = g * a.data
                _accum(b, gb.sum(axis=0, keepdims=True) if which == "b" else gb)
        tape.record(out, (a, b), back)
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    tape = _wants_grad(a)
    if tape:
        mask = out.data > 0.0  # gradient at exactly 0 is 0
        def back(g, a=a, mask=mask):
            _accum(a, g * mask)
        tape.record(out, (a,), back)
    return out


def row_l2_normalize(a: Tensor) -> Tensor:
    """Scale each row to unit L2 norm; zero rows stay zero (gradient zero)."""
    norms = np.linalg.norm(a.data, axis=1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    out = Tensor(a.data / safe)
    tape = _wants_grad(a)
    if tape:
        y = out.data
        def back(g, a=a, y=y, safe=safe, norms=norms):
            inner = (g * y).sum(axis=1, keepdims=True)
            ga = (g - y * inner) / safe
            ga[norms[:, 0] == 0.0] = 0.0
            _accum(a, ga)
        tape.record(out, (a,), back)
    return out


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * c)
    tape = _wants_grad(a)
    if tape:
        def back(g, a=a, c=c):
            _accum(a, g * c)
        tape.record(out, (a,), back)
    return out


def exp(a: Tensor) -> Tensor:
    out = Tensor(np.exp(a.data))
    tape = _wants_grad(a)
    if tape:
        def back(g, a=a, y=out.data):
            _accum(a, g * y)
        tape.record(out, (a,), back)
    return out


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise ContractError("log: non-positive input")
    out = Tensor(np.log(a.data))
    tape = _wants_grad(a)
    if tape:
        def back(g, a=a):
            _accum(a, g / a.data)
        tape.record(out, (a,), back)
    return out


def reduce_sum(a: Tensor) -> Tensor:
    out = Tensor(np.array([[a.data.sum()]]))
    tape = _wants_grad(a)
    if tape:
        def back(g, a=a):
            _accum(a, np.full_like(a.data, g[0, 0]))
        tape.record(out, (a,), back)
    return out


def reduce_mean(a: Tensor) -> Tensor:
    n = a.data.size
    out = Tensor(np.array([[a.data.sum() / n]]))
    tape = _wants_grad(a)
    if tape:
        def back(g, a=a, n=n):
            _accum(a, np.full_like(a.data, g[0, 0] / n))
        tape.record(out, (a,), back)
    return out


PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "relu": relu,
    "row_l2_normalize": row_l2_normalize,
    "scalar_mul": scalar_mul,
    "exp": exp,
    "log": log,
    "sum": reduce_sum,
    "mean": reduce_mean,
}


def forward_primitive(kind: str, *operands) -> Tensor:
    """Apply a primitive by name (the names above plus ``mul``)."""
    fns = dict(PRIMITIVES, mul=mul)
    if kind not in fns:
        raise ValueError(f"unknown primitive kind {kind!r}")
    return fns[kind](*operands)


# ---------------------------------------------------------------------------
# composition helpers: constant-indexed ops the losses need at matrix
# granularity (still tape-recorded, same gradient contract as primitives)


def gather_rows(a: Tensor, idx) -> Tensor:
    """Select rows ``a[idx]``; rows may repeat. Backward scatter-adds."""
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError(f"gather_rows: index must be 1-D, got {idx.shape}")
    out = Tensor(a.data[idx])
    tape = _wants_grad(a)
    if tape:
        def back(g, a=a, idx=idx):
            buf = np.zeros_like(a.data)
            np.add.at(buf, idx, g)
            _accum(a, buf)
        tape.record(out, (a,), back)
    return out


def csr_matmul(s, a: Tensor) -> Tensor:
    """Constant sparse matrix times tensor: ``s @ a`` with gradient ``s.T @ g``."""
    if s.shape[1] != a.rows:
        raise ShapeError(f"csr_matmul: {s.shape} @ {a.shape}")
    out = Tensor(np.asarray(s @ a.data))
    tape = _wants_grad(a)
    if tape:
        st = s.T.tocsr()
        def back(g, a=a, st=st):
            _accum(a, np.asarray(st @ g))
        tape.record(out, (a,), back)
    return out


def segment_sum(a: Tensor, lengths) -> Tensor:
    """Sum consecutive row blocks; ``lengths`` may contain zeros (-> zero row)."""
    lengths = np.asarray(lengths, dtype=np.intp)
    if lengths.sum() != a.rows:
        raise ShapeError(f"segment_sum: lengths {lengths.sum()} != rows {a.rows}")
    cs = np.vstack([np.zeros((1, a.cols)), np.cumsum(a.data, axis=0)])
    ends = np.cumsum(lengths)
    out = Tensor(cs[ends] - cs[ends - lengths])
    tape = _wants_grad(a)
    if tape:
        def back(g, a=a, lengths=lengths):
            _accum(a, np.repeat(g, lengths, axis=0))
        tape.record(out, (a,), back)
    return out


def segment_mean(a: Tensor, lengths) -> Tensor:
    """Mean over consecutive row blocks; empty blocks yield zero rows."""
    lengths = np.asarray(lengths, dtype=np.intp)
    total = segment_sum(a, lengths)
    inv = np.where(lengths > 0, 1.0 / np.maximum(lengths, 1), 0.0)
    return mul(total, Tensor(inv.reshape(-1, 1) * np.ones((1, a.cols))))


# ---------------------------------------------------------------------------
# optimization


def xavier_init(rows: int, cols: int, rng_seed: int) -> Tensor:
    """Uniform Xavier/Glorot init on [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))]."""
    if rows < 1 or cols < 1:
        raise ContractError(f"xavier_init: dimensions must be >= 1, got {rows}x{cols}")
    bound = math.sqrt(6.0 / (rows + cols))
    rng = np.random.default_rng(rng_seed)
    return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True)


class AdamState:
    """Adam moment accumulators bound to a fixed parameter list."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]


def adam_step(params, state: AdamState) -> None:
    """One bias-corrected Adam update in place; clears gradients afterward."""
    params = list(params)
    if len(params) != len(state.params) or any(p is not q for p, q in zip(params, state.params)):
        raise ContractError("adam_step: parameter list does not match optimizer state")
    for p in params:
        if p.grad is None:
            raise ContractError("adam_step: parameter has no gradient (run backward first)")
    state.step += 1
    b1c = 1.0 - state.beta1 ** state.step
    b2c = 1.0 - state.beta2 ** state.step
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.lr * (m / b1c) / (np.sqrt(v / b2c) + state.eps)
        p.grad = None
