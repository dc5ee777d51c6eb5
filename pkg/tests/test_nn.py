"""Dense-network stack: streams, forward/backward, optimizer, warm-up."""

import math

import numpy as np
import pytest

from prefdiff.nn import (
    NumericError,
    RngStream,
    adamw_step,
    make_adamw,
    make_mlp,
    mlp_backward,
    mlp_forward,
    mlp_params,
    rng_gaussian,
    warmup_lr,
)


def fd_scalar(f, arr, idx, h=1e-6):
    v = arr[idx]
    arr[idx] = v + h
    fp = f()
    arr[idx] = v - h
    fm = f()
    arr[idx] = v
    return (fp - fm) / (2.0 * h)


def rel_err(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))


# --- random streams ---------------------------------------------------------


def test_same_seed_reproduces_bits():
    a = rng_gaussian(RngStream(7), [3, 4])
    b = rng_gaussian(RngStream(7), [3, 4])
    assert np.array_equal(a, b)


def test_different_seeds_differ():
    a = rng_gaussian(RngStream(7), [64])
    b = rng_gaussian(RngStream(8), [64])
    assert not np.array_equal(a, b)


def test_spawn_is_keyed_not_sequential():
    # child i's draws must not depend on whether sibling children were used
    r1 = RngStream(3)
    direct = rng_gaussian(r1.spawn(2), [5])
    r2 = RngStream(3)
    rng_gaussian(r2.spawn(0), [17])
    rng_gaussian(r2.spawn(1), [17])
    assert np.array_equal(direct, rng_gaussian(r2.spawn(2), [5]))


def test_spawn_children_are_distinct():
    r = RngStream(3)
    a = rng_gaussian(r.spawn(0), [32])
    b = rng_gaussian(r.spawn(1), [32])
    assert not np.array_equal(a, b)


def test_nested_spawn_reproducible():
    a = rng_gaussian(RngStream(5).spawn(1).spawn(4), [6])
    b = rng_gaussian(RngStream(5).spawn(1).spawn(4), [6])
    assert np.array_equal(a, b)


def test_seed_bounds():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(2**64)
    RngStream(2**64 - 1)


def test_spawn_index_must_be_non_negative():
    with pytest.raises(ValueError):
        RngStream(0).spawn(-1)


def test_rng_gaussian_shape_validation():
    with pytest.raises(ValueError):
        rng_gaussian(RngStream(0), [])
    with pytest.raises(ValueError):
        rng_gaussian(RngStream(0), [3, 0])


# --- mlp construction and forward -------------------------------------------


def test_make_mlp_shapes_and_init():
    net = make_mlp([3, 5, 2], RngStream(1))
    assert [w.shape for w in net.weights] == [(3, 5), (5, 2)]
    assert [b.shape for b in net.biases] == [(5,), (2,)]
    assert all(np.all(b == 0.0) for b in net.biases)
    for w, (fi, fo) in zip(net.weights, [(3, 5), (5, 2)]):
        assert np.max(np.abs(w)) <= math.sqrt(6.0 / (fi + fo))
    assert net.d_in == 3 and net.d_out == 2


def test_make_mlp_validation():
    with pytest.raises(ValueError):
        make_mlp([4], RngStream(0))
    with pytest.raises(ValueError):
        make_mlp([3, 0, 1], RngStream(0))


def test_mlp_params_order():
    net = make_mlp([2, 4, 1], RngStream(0))
    ps = mlp_params(net)
    assert ps[0] is net.weights[0] and ps[1] is net.biases[0]
    assert ps[2] is net.weights[1] and ps[3] is net.biases[1]


def test_forward_single_layer_is_affine():
    net = make_mlp([2, 3], RngStream(2))
    x = rng_gaussian(RngStream(3), [5, 2])
    assert np.allclose(mlp_forward(net, x), x @ net.weights[0] + net.biases[0], atol=0)


def test_forward_hidden_tanh_closed_form():
    net = make_mlp([1, 1, 1], RngStream(0))
    net.weights[0][:] = 2.0
    net.biases[0][:] = 0.5
    net.weights[1][:] = 3.0
    net.biases[1][:] = -1.0
    x = np.array([[-1.0], [0.0], [0.7]])
    want = 3.0 * np.tanh(2.0 * x + 0.5) - 1.0
    assert np.allclose(mlp_forward(net, x), want, atol=1e-15)


def test_forward_input_validation():
    net = make_mlp([3, 2], RngStream(0))
    with pytest.raises(ValueError):
        mlp_forward(net, np.zeros(3))
    with pytest.raises(ValueError):
        mlp_forward(net, np.zeros((4, 2)))


# --- backward ----------------------------------------------------------------


def test_backward_matches_finite_differences():
    rng = RngStream(9)
    net = make_mlp([3, 5, 4, 2], rng)
    x = rng_gaussian(rng, [6, 3])
    upstream = rng_gaussian(rng, [6, 2])
    grads, x_grad = mlp_backward(net, x, upstream)

    def f():
        return float(np.sum(upstream * mlp_forward(net, x)))

    worst = 0.0
    for p, g in zip(mlp_params(net), grads):
        for idx in np.ndindex(p.shape):
            worst = max(worst, rel_err(g[idx], fd_scalar(f, p, idx)))
    for idx in np.ndindex(x.shape):
        worst = max(worst, rel_err(x_grad[idx], fd_scalar(f, x, idx)))
    assert worst <= 1e-6


def test_backward_is_additive_over_rows():
    rng = RngStream(10)
    net = make_mlp([2, 6, 1], rng)
    x = rng_gaussian(rng, [2, 2])
    up = rng_gaussian(rng, [2, 1])
    joint, _ = mlp_backward(net, x, up)
    g0, _ = mlp_backward(net, x[:1], up[:1])
    g1, _ = mlp_backward(net, x[1:], up[1:])
    for j, a, b in zip(joint, g0, g1):
        assert np.allclose(j, a + b, atol=1e-12)


def test_backward_upstream_shape_validation():
    net = make_mlp([2, 3], RngStream(0))
    with pytest.raises(ValueError):
        mlp_backward(net, np.zeros((4, 2)), np.zeros((4, 2)))


# --- adamw --------------------------------------------------------------------


def test_make_adamw_validation():
    p = [np.zeros(2)]
    with pytest.raises(ValueError):
        make_adamw(p, lr=0.0)
    with pytest.raises(ValueError):
        make_adamw(p, lr=1e-3, beta1=1.0)
    with pytest.raises(ValueError):
        make_adamw(p, lr=1e-3, eps=0.0)
    with pytest.raises(ValueError):
        make_adamw(p, lr=1e-3, weight_decay=-0.1)


def test_adamw_first_step_formula_without_decay():
    p = [np.array([1.0, -2.0, 0.5])]
    g = [np.array([0.3, -0.1, 2.0])]
    st = make_adamw(p, lr=0.01, weight_decay=0.0)
    want = p[0] - 0.01 * g[0] / (np.abs(g[0]) + st.eps)
    adamw_step(st, p, g)
    assert np.allclose(p[0], want, atol=1e-15)
    assert st.step == 1
    assert np.allclose(st.m[0], 0.1 * g[0], atol=1e-15)
    assert np.allclose(st.v[0], 0.001 * g[0] ** 2, atol=1e-15)


def test_adamw_decay_is_decoupled():
    # zero gradients leave the moments at zero: only the decay term moves p
    p = [np.array([2.0, -3.0])]
    st = make_adamw(p, lr=0.1, weight_decay=0.01)
    start = p[0].copy()
    for _ in range(3):
        adamw_step(st, p, [np.zeros(2)])
    assert np.allclose(p[0], start * (1.0 - 0.1 * 0.01) ** 3, rtol=1e-12)


def test_adamw_zero_decay_zero_grad_is_identity():
    p = [np.array([2.0, -3.0])]
    st = make_adamw(p, lr=0.1, weight_decay=0.0)
    adamw_step(st, p, [np.zeros(2)])
    assert np.array_equal(p[0], np.array([2.0, -3.0]))


def test_adamw_default_decay_is_nonzero():
    assert make_adamw([np.zeros(1)], lr=1e-3).weight_decay == 0.01


def test_adamw_rejects_non_finite_gradient():
    p = [np.ones(2)]
    st = make_adamw(p, lr=1e-3)
    with pytest.raises(NumericError):
        adamw_step(st, p, [np.array([1.0, np.nan])])


def test_adamw_shape_and_count_validation():
    p = [np.ones(2)]
    st = make_adamw(p, lr=1e-3)
    with pytest.raises(ValueError):
        adamw_step(st, p, [np.ones(3)])
    with pytest.raises(ValueError):
        adamw_step(st, p, [np.ones(2), np.ones(2)])


# --- warm-up -------------------------------------------------------------------


def test_warmup_ramps_over_first_five_percent():
    assert warmup_lr(1.0, 1, 100) == pytest.approx(0.2)
    assert warmup_lr(1.0, 5, 100) == 1.0
    assert warmup_lr(1.0, 6, 100) == 1.0
    assert warmup_lr(1.0, 100, 100) == 1.0
    assert warmup_lr(1.0, 25, 1000) == pytest.approx(0.5)


def test_warmup_ramp_is_at_least_one_step():
    assert warmup_lr(2.0, 1, 10) == 2.0
    assert warmup_lr(2.0, 1, 1) == 2.0
