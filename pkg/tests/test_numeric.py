import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lookahead.numeric import (ContractError, DeterminismError, LrSchedule, NumericError, OptimizerState,
                               ShapeError, Tensor, adamw_step, backward, check_gradients, linear_warmup_decay,
                               lr_at, no_grad, set_debug)
from lookahead.numeric import autodiff as ad


def fd_grad(f, x, eps=1e-6):
    """Independent central-difference gradient of a scalar numpy function."""
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + eps
        hi = f(x)
        x[i] = old - eps
        lo = f(x)
        x[i] = old
        g[i] = (hi - lo) / (2 * eps)
    return g


def analytic(op, x):
    t = Tensor(x.copy(), requires_grad=True)
    backward(ad.sum(op(t)))
    return t.grad


def numeric(op, x):
    def f(v):
        with no_grad():
            return float(np.sum(op(Tensor(v)).value))
    return fd_grad(f, x.copy())


_T = np.random.default_rng(0).normal(size=(4, 3))
UNARY = {
    "exp": ad.exp,
    "tanh": ad.tanh,
    "sigmoid": ad.sigmoid,
    "gelu": ad.gelu,
    "log": lambda t: ad.log(ad.add(ad.mul(t, t), 1.0)),
    "softmax": lambda t: ad.mul(ad.softmax(t, axis=-1), np.arange(4.0)),
    "log_softmax": lambda t: ad.mul(ad.log_softmax(t, axis=-1), np.arange(4.0)),
    "logsumexp": lambda t: ad.logsumexp(t, axis=-1),
    "mean_rows": lambda t: ad.mul(ad.mean(t, axis=0), np.arange(1.0, 5.0)),
    "transpose": lambda t: ad.mul(ad.transpose(t), _T),
    "reshape": lambda t: ad.mul(ad.reshape(t, (2, 6)), np.arange(12.0).reshape(2, 6)),
    "slice": lambda t: ad.mul(t[1:, ::2], 3.0),
    "masked_fill": lambda t: ad.mul(ad.masked_fill(t, np.eye(3, 4, dtype=bool), 2.0), t),
    "div": lambda t: ad.div(t, ad.add(ad.mul(t, t), 2.0)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_op_gradient_matches_finite_differences(name):
    x = np.random.default_rng(1).normal(size=(3, 4))
    op = UNARY[name]
    a, n = analytic(op, x), numeric(op, x)
    assert np.max(np.abs(a - n) / np.maximum(1, np.abs(n))) < 1e-4


def test_matmul_layernorm_embedding_concat_gradients():
    r = np.random.default_rng(2)
    w0, g0, b0 = r.normal(size=(4, 5)), r.normal(size=5), r.normal(size=5)
    e0 = r.normal(size=(6, 4))
    ids = np.array([[0, 3, 3], [5, 1, 0]])
    params = {k: Tensor(v.copy(), requires_grad=True) for k, v in dict(w=w0, g=g0, b=b0, e=e0).items()}

    def loss():
        h = ad.embedding(params["e"], ids)
        h = ad.layer_norm(ad.matmul(h, params["w"]), params["g"], params["b"])
        h = ad.concat([h, ad.gelu(h)], axis=-1)
        return ad.mean(ad.mul(h, h))

    assert check_gradients(loss, params, eps=1e-5) < 1e-6


def test_cross_entropy_gradient_softmax_layer():
    r = np.random.default_rng(3)
    x = r.normal(size=(5, 4))
    params = {"w": Tensor(r.normal(size=(4, 3)), requires_grad=True)}
    y = np.array([0, 2, 1, 1, 0])
    err = check_gradients(lambda: ad.cross_entropy(ad.matmul(x, params["w"]), y, np.full(5, 0.2)), params)
    assert err < 1e-6


def test_matmul_identity():
    a = np.array([[1.5, -2.0], [0.25, 3.0]])
    assert np.array_equal(ad.matmul(Tensor(np.eye(2)), Tensor(a)).value, a)


def test_softmax_uniform_and_shift_invariant():
    assert np.allclose(ad.softmax(Tensor(np.zeros(3))).value, 1 / 3, atol=1e-15)
    x = np.random.default_rng(4).normal(size=(4, 7))
    s = ad.softmax(Tensor(x), axis=-1).value
    assert np.max(np.abs(ad.softmax(Tensor(x + 17.3), axis=-1).value - s)) < 1e-12
    assert np.max(np.abs(s.sum(axis=-1) - 1)) < 1e-12


def test_masked_softmax_zero_weight_and_full_mask_error():
    mask = np.array([[True, False, True]])
    s = ad.softmax(Tensor(np.array([[1.0, 50.0, 2.0]])), axis=-1, mask=mask).value
    assert s[0, 1] == 0.0 and abs(s.sum() - 1) < 1e-12
    with pytest.raises(ContractError, match="masked"):
        ad.softmax(Tensor(np.ones((1, 3))), axis=-1, mask=np.zeros((1, 3), bool))


def test_layer_norm_moments():
    x = np.random.default_rng(5).normal(3.0, 4.0, size=(6, 16))
    y = ad.layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16))).value
    assert np.max(np.abs(y.mean(axis=-1))) < 1e-10
    assert np.max(np.abs(y.var(axis=-1) - 1)) < 1e-4   # eps=1e-5 inside the square root


def test_layer_norm_moments_without_eps():
    x = np.random.default_rng(5).normal(3.0, 4.0, size=(6, 16))
    y = ad.layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16)), eps=0.0).value
    assert np.max(np.abs(y.var(axis=-1) - 1)) < 1e-8


def test_backward_linear_quadratic_and_accumulation():
    w = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    backward(ad.sum(w))
    assert np.array_equal(w.grad, np.ones(3))
    backward(ad.sum(w))
    assert np.array_equal(w.grad, 2 * np.ones(3))
    w.zero_grad()
    backward(ad.sum(ad.mul(w, w)))
    assert np.array_equal(w.grad, 2 * w.value)


def test_backward_requires_scalar():
    w = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        backward(ad.mul(w, 2.0))


def test_shape_errors_name_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
    with pytest.raises(ShapeError):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 3))))


def test_non_finite_rejected_at_construction_and_in_debug():
    with pytest.raises(NumericError):
        Tensor(np.array([1.0, np.nan]))
    set_debug(True)
    try:
        with pytest.raises(NumericError):
            ad.exp(Tensor(np.array([1000.0])))
    finally:
        set_debug(False)


def test_check_gradients_quadratic_and_determinism():
    params = {"w": Tensor(np.random.default_rng(6).normal(size=(4, 3)), requires_grad=True)}
    assert check_gradients(lambda: ad.mul(ad.sum(ad.mul(params["w"], params["w"])), 0.5), params, 1e-5) < 1e-8
    calls = iter(range(10**6))
    with pytest.raises(DeterminismError):
        check_gradients(lambda: ad.add(ad.sum(params["w"]), float(next(calls))), params)
    with pytest.raises(ContractError):
        check_gradients(lambda: ad.sum(params["w"]), params, eps=0.1)


def reference_adamw(w, g, m, v, t, lr, b1, b2, eps, wd):
    """Plain re-derivation of one decoupled-decay Adam step."""
    w = w * (1 - lr * wd)
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g * g
    mhat, vhat = m / (1 - b1 ** t), v / (1 - b2 ** t)
    return w - lr * mhat / (np.sqrt(vhat) + eps), m, v


def test_adamw_matches_reference_over_steps():
    r = np.random.default_rng(7)
    w0 = r.normal(size=(3, 2))
    p = {"w": Tensor(w0.copy(), requires_grad=True)}
    st_ = OptimizerState(lr=0.01, weight_decay=0.1)
    w, m, v = w0.copy(), np.zeros_like(w0), np.zeros_like(w0)
    for t in range(1, 6):
        g = r.normal(size=w0.shape)
        adamw_step(p, st_, {"w": g})
        w, m, v = reference_adamw(w, g, m, v, t, 0.01, 0.9, 0.999, 1e-8, 0.1)
    assert np.allclose(p["w"].value, w, rtol=0, atol=1e-14)
    assert st_.step == 5


def test_adamw_decay_only_and_identity():
    p = {"w": Tensor(np.array([2.0, -4.0]), requires_grad=True)}
    adamw_step(p, OptimizerState(lr=0.1, weight_decay=0.5), {"w": np.zeros(2)})
    assert np.allclose(p["w"].value, np.array([2.0, -4.0]) * (1 - 0.05))
    before = p["w"].value.copy()
    adamw_step(p, OptimizerState(lr=0.1, weight_decay=0.0), {"w": np.zeros(2)})
    assert np.array_equal(p["w"].value, before)


def test_adamw_first_step_magnitude():
    g = np.array([0.5, -2.0, 1e-3])
    p = {"w": Tensor(np.zeros(3), requires_grad=True)}
    adamw_step(p, OptimizerState(lr=0.01, weight_decay=0.0, eps=1e-8), {"w": g})
    expected = -0.01 * np.sign(g) * np.abs(g) / (np.abs(g) + 1e-8)
    assert np.allclose(p["w"].value, expected, rtol=1e-12, atol=0)


def test_adamw_shape_mismatch():
    p = {"w": Tensor(np.zeros(3), requires_grad=True)}
    with pytest.raises(ShapeError):
        adamw_step(p, OptimizerState(), {"w": np.zeros(4)})


def test_lr_schedule_boundaries():
    s = LrSchedule(base_lr=1.0, total_steps=100, warmup_steps=10, min_lr=0.1)
    assert lr_at(s, 0) == 0.0
    assert lr_at(s, 10) == 1.0
    assert abs(lr_at(s, 55) - 0.55) < 1e-12
    assert abs(lr_at(s, 100) - 0.1) < 1e-12
    with pytest.raises(ContractError):
        lr_at(s, 101)
    with pytest.raises(ContractError):
        lr_at(s, -1)


def test_lr_schedule_continuity():
    s = LrSchedule.with_warmup_fraction(3e-3, 1000, 0.1)
    vals = np.array([lr_at(s, k) for k in range(1001)])
    assert np.max(np.abs(np.diff(vals))) <= 3e-3 / 100 + 1e-15


def test_linear_warmup_decay_shape():
    vals = [linear_warmup_decay(1.0, 100, k, 0.1) for k in range(101)]
    assert vals[10] == pytest.approx(1.0)
    assert vals[100] == pytest.approx(0.0)
    assert vals[55] == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 5), elements=st.floats(-30, 30)))
def test_softmax_rows_sum_to_one(x):
    s = ad.softmax(Tensor(x), axis=-1).value
    assert np.all(s >= 0)
    assert np.max(np.abs(s.sum(axis=-1) - 1)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (2, 3), elements=st.floats(-3, 3)), arrays(np.float64, (3,), elements=st.floats(-3, 3)))
def test_broadcast_mul_gradient(a, b):
    ta, tb = Tensor(a.copy(), requires_grad=True), Tensor(b.copy(), requires_grad=True)
    backward(ad.sum(ad.mul(ta, tb)))
    assert np.allclose(ta.grad, np.broadcast_to(b, a.shape))
    assert np.allclose(tb.grad, a.sum(axis=0))


def test_determinism_bit_identical():
    def run():
        r = np.random.default_rng(11)
        p = {"w": Tensor(r.normal(size=(4, 4)), requires_grad=True)}
        st_ = OptimizerState(lr=1e-2)
        x = r.normal(size=(8, 4))
        for _ in range(5):
            p["w"].grad = None
            backward(ad.mean(ad.tanh(ad.matmul(x, p["w"]))))
            adamw_step(p, st_)
        return p["w"].value
    assert np.array_equal(run(), run())


def test_no_grad_skips_tape():
    w = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        y = ad.mul(w, 3.0)
    assert not y.requires_grad
    assert math.isclose(float(y.value.sum()), 6.0)
