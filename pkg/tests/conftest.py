import numpy as np
import pytest

from segnn.graph import Graph


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def toy_graph(seed: int = 0, n: int = 12, f: int = 5, classes: int = 2,
              p_edge: float = 0.3) -> Graph:
    """Small random connected-ish graph with labels and masks everywhere."""
    r = np.random.default_rng(seed)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if r.random() < p_edge]
    pairs += [(i, i + 1) for i in range(n - 1)]  # keep it connected
    labels = r.integers(0, classes, size=n)
    ids = r.permutation(n)
    k = max(2, n // 3)
    return Graph(r.normal(size=(n, f)), pairs, labels,
                 train_mask=ids[:k], val_mask=ids[k:2 * k], test_mask=ids[2 * k:])


@pytest.fixture
def small_graph():
    return toy_graph()
