import numpy as np
import pytest

import segnn.autodiff as ad
from segnn.autodiff import (AdamState, ContractError, ShapeError, Tape, Tensor,
                            adam_step, forward_primitive, xavier_init)


def finite_diff(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar-valued f() w.r.t. the array x,
    mutated in place entry by entry."""
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        old = x[idx]
        x[idx] = old + eps
        fp = f()
        x[idx] = old - eps
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * eps)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


def grad_of(build, param: Tensor) -> np.ndarray:
    param.clear_grad()
    with Tape() as tape:
        loss = build()
        tape.backward(loss)
    return param.grad.copy()


# ---------------------------------------------------------------------------
# stated examples


def test_matmul_identity():
    m = Tensor([[1.5, -2.0], [0.25, 4.0]])
    eye = Tensor(np.eye(2))
    assert np.allclose(ad.matmul(eye, m).data, m.data)


def test_relu_definition():
    out = ad.relu(Tensor([[-1.0, 2.0]]))
    assert np.array_equal(out.data, [[0.0, 2.0]])


def test_row_l2_normalize_345():
    out = ad.row_l2_normalize(Tensor([[3.0, 4.0]]))
    assert np.allclose(out.data, [[0.6, 0.8]])


def test_backward_sum_gives_ones():
    w = Tensor(np.arange(4.0).reshape(2, 2), requires_grad=True)
    g = grad_of(lambda: ad.reduce_sum(w), w)
    assert np.array_equal(g, np.ones((2, 2)))


def test_backward_mean_relu():
    w = Tensor([[-1.0, 1.0]], requires_grad=True)
    g = grad_of(lambda: ad.reduce_mean(ad.relu(w)), w)
    assert np.array_equal(g, [[0.0, 0.5]])


def test_adam_zero_grad_is_fixed_point():
    p = Tensor([[2.0, -3.0]], requires_grad=True)
    state = AdamState([p], lr=0.01)
    p.grad = np.zeros_like(p.data)
    adam_step([p], state)
    assert np.array_equal(p.data, [[2.0, -3.0]])


def test_adam_first_step_magnitude():
    p = Tensor([[1.0]], requires_grad=True)
    state = AdamState([p], lr=0.01)
    p.grad = np.ones((1, 1))
    adam_step([p], state)
    # bias-corrected first step is lr * g / (|g| + eps) ~= lr
    assert abs((1.0 - p.data[0, 0]) - 0.01) < 1e-6
    assert p.grad is None


def test_adam_second_moment_accumulates():
    p = Tensor([[1.0]], requires_grad=True)
    state = AdamState([p], lr=0.01)
    for _ in range(2):
        p.grad = np.ones((1, 1))
        adam_step([p], state)
    assert state.v[0][0, 0] > 0.0
    assert state.step == 2


def test_xavier_bound_and_determinism():
    t = xavier_init(1, 5, 7)
    assert t.shape == (1, 5)
    assert np.all(np.abs(t.data) <= 1.0)
    assert np.array_equal(t.data, xavier_init(1, 5, 7).data)
    big = xavier_init(64, 64, 3)
    assert abs(big.data.mean()) < 0.02
    bound = np.sqrt(6.0 / 128)
    assert np.all(np.abs(big.data) <= bound)


def test_xavier_rejects_zero_dims():
    with pytest.raises(ContractError):
        xavier_init(0, 4, 1)


# ---------------------------------------------------------------------------
# finite-difference oracle per primitive


def _fd_check(op, arrays, param_idx=0, eps=1e-6, tol=1e-5, make_positive=False):
    rng = np.random.default_rng(42 + param_idx)
    datas = []
    for shape in arrays:
        a = rng.uniform(-2.0, 2.0, size=shape)
        if make_positive:
            a = np.abs(a) + 0.5
        a[np.abs(a) < 1e-3] += 0.01  # stay away from relu kinks
        datas.append(a)
    tensors = [Tensor(d.copy(), requires_grad=(i == param_idx))
               for i, d in enumerate(datas)]

    def forward_value():
        outs = op(*[Tensor(t.data) for t in tensors])
        return outs.data.sum()

    analytic = grad_of(lambda: ad.reduce_sum(op(*tensors)), tensors[param_idx])
    numeric = finite_diff(lambda: forward_value(), tensors[param_idx].data, eps)
    assert rel_err(analytic, numeric) < tol


@pytest.mark.parametrize("case", [
    ("matmul-a", lambda: _fd_check(ad.matmul, [(3, 4), (4, 2)], 0)),
    ("matmul-b", lambda: _fd_check(ad.matmul, [(3, 4), (4, 2)], 1)),
    ("add", lambda: _fd_check(ad.add, [(3, 3), (3, 3)], 0)),
    ("add-broadcast", lambda: _fd_check(ad.add, [(3, 3), (1, 3)], 1)),
    ("mul", lambda: _fd_check(ad.mul, [(3, 3), (3, 3)], 1)),
    ("mul-broadcast", lambda: _fd_check(ad.mul, [(4, 3), (1, 3)], 1)),
    ("relu", lambda: _fd_check(ad.relu, [(4, 4)], 0)),
    ("row_l2_normalize", lambda: _fd_check(ad.row_l2_normalize, [(4, 3)], 0)),
    ("scalar_mul", lambda: _fd_check(lambda a: ad.scalar_mul(a, -1.7), [(3, 3)], 0)),
    ("exp", lambda: _fd_check(ad.exp, [(3, 3)], 0)),
    ("log", lambda: _fd_check(ad.log, [(3, 3)], 0, make_positive=True)),
    ("sum", lambda: _fd_check(ad.reduce_sum, [(3, 5)], 0)),
    ("mean", lambda: _fd_check(ad.reduce_mean, [(3, 5)], 0)),
], ids=lambda c: c[0])
def test_primitive_gradients_match_finite_differences(case):
    case[1]()


def test_helper_gradients_match_finite_differences():
    _fd_check(lambda a: ad.gather_rows(a, np.array([2, 0, 2, 1])), [(3, 3)], 0)
    _fd_check(lambda a: ad.segment_sum(a, np.array([2, 0, 3])), [(5, 2)], 0)
    _fd_check(lambda a: ad.segment_mean(a, np.array([2, 0, 3])), [(5, 2)], 0)
    import scipy.sparse as sp
    s = sp.random(4, 3, density=0.6, random_state=1, format="csr")
    _fd_check(lambda a: ad.csr_matmul(s, a), [(3, 4)], 0)


def test_full_composition_matches_finite_differences():
    rng = np.random.default_rng(7)
    x = rng.uniform(-2.0, 2.0, size=(3, 3))
    w = Tensor(rng.uniform(-2.0, 2.0, size=(3, 3)), requires_grad=True)
    b = Tensor(rng.uniform(0.2, 1.0, size=(1, 3)), requires_grad=True)

    def build(wt, bt):
        t2 = ad.add(ad.matmul(Tensor(x), wt), bt)
        t3 = ad.relu(t2)
        t4 = ad.row_l2_normalize(t3)
        t6 = ad.log(ad.exp(ad.scalar_mul(t4, 0.5)))
        t7 = ad.mul(t6, t4)
        return ad.add(ad.scalar_mul(ad.reduce_sum(t7), 0.3),
                      ad.scalar_mul(ad.reduce_mean(t4), 0.7)), t2

    with Tape() as tape:
        loss, pre = build(w, b)
        assert np.abs(pre.data).min() > 1e-3  # instance away from relu kinks
        tape.backward(loss)
    for param in (w, b):
        analytic = param.grad.copy()
        numeric = finite_diff(
            lambda: build(Tensor(w.data), Tensor(b.data))[0].item(), param.data)
        assert rel_err(analytic, numeric) < 1e-5


# ---------------------------------------------------------------------------
# contracts and invariants


def test_backward_linearity():
    rng = np.random.default_rng(3)
    w = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    x1 = Tensor(rng.normal(size=(3, 3)))
    x2 = Tensor(rng.normal(size=(3, 3)))

    def l1():
        return ad.reduce_sum(ad.mul(ad.matmul(x1, w), ad.matmul(x1, w)))

    def l2():
        return ad.reduce_mean(ad.relu(ad.matmul(x2, w)))

    g1 = grad_of(l1, w)
    g2 = grad_of(l2, w)
    g12 = grad_of(lambda: ad.add(l1(), l2()), w)
    assert np.allclose(g12, g1 + g2, atol=1e-12)


def test_backward_accumulates_across_passes():
    w = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape() as tape:
        loss = ad.reduce_sum(w)
        tape.backward(loss)
    with Tape() as tape:
        loss = ad.reduce_sum(w)
        tape.backward(loss)
    assert np.array_equal(w.grad, 2 * np.ones((2, 2)))


def test_unreachable_tensor_gets_zero_gradient():
    w = Tensor(np.ones((2, 2)), requires_grad=True)
    v = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape() as tape:
        ad.relu(w)  # recorded but never feeds the loss
        loss = ad.reduce_sum(v)
        tape.backward(loss)
    assert np.array_equal(w.grad, np.zeros((2, 2)))
    assert np.array_equal(v.grad, np.ones((2, 2)))


def test_row_normalize_outputs_unit_or_zero_rows():
    rng = np.random.default_rng(5)
    m = rng.normal(size=(6, 4))
    m[2] = 0.0
    out = ad.row_l2_normalize(Tensor(m)).data
    norms = np.linalg.norm(out, axis=1)
    assert np.allclose(norms[[0, 1, 3, 4, 5]], 1.0)
    assert norms[2] == 0.0


def test_zero_row_normalize_gradient_is_zero():
    m = Tensor(np.zeros((2, 3)), requires_grad=True)
    g = grad_of(lambda: ad.reduce_sum(ad.row_l2_normalize(m)), m)
    assert np.array_equal(g, np.zeros((2, 3)))


def test_shape_errors_name_primitive_and_shapes():
    with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError, match="add"):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))


def test_backward_requires_scalar_connected_loss():
    w = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape() as tape:
        out = ad.relu(w)
        with pytest.raises(ContractError):
            tape.backward(out)  # not 1x1
    tape2 = Tape()
    with tape2:
        pass
    stray = Tensor([[1.0]])
    with pytest.raises(ContractError):
        tape2.backward(stray)


def test_log_rejects_nonpositive():
    with pytest.raises(ContractError):
        ad.log(Tensor([[0.0, 1.0]]))


def test_adam_rejects_missing_gradient():
    p = Tensor([[1.0]], requires_grad=True)
    state = AdamState([p])
    with pytest.raises(ContractError):
        adam_step([p], state)


def test_forward_primitive_dispatch():
    out = forward_primitive("relu", Tensor([[-2.0, 2.0]]))
    assert np.array_equal(out.data, [[0.0, 2.0]])
    assert forward_primitive("sum", Tensor(np.ones((2, 2)))).item() == 4.0
    with pytest.raises(ValueError):
        forward_primitive("conv2d", Tensor([[1.0]]))


def test_no_tape_means_no_recording():
    w = Tensor(np.ones((2, 2)), requires_grad=True)
    out = ad.relu(w)  # outside any tape
    assert out.grad is None
    with Tape() as tape:
        out2 = ad.relu(Tensor(np.ones((2, 2))))  # no grad-requiring operand
        assert len(tape) == 0
        assert not out2.requires_grad
