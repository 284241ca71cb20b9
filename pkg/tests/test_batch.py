import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oneshotstl import batch
from oneshotstl.batch import (
    IrlsWeights,
    auxiliary_objective,
    batch_objective,
    build_batch_system,
    build_online_system,
    irls_weight_p,
    irls_weight_q,
    joint_stl,
    joint_stl_iterates,
    modified_joint_stl,
    solve_batch_system,
    tail_block,
)
from oneshotstl.core import Config, NonFiniteInput

from oracles import dense_batch_system, dense_online_system

# bottom-right 4x4 block of the 5-point window system with unit weights and
# unit penalties, derived by hand from the difference operators
A_O_UNIT = np.array([
    [8.0, 1.0, -3.0, 0.0],
    [1.0, 2.0, 0.0, 0.0],
    [-3.0, 0.0, 3.0, 1.0],
    [0.0, 0.0, 1.0, 2.0],
])

# bottom-right 6x6 block of the 6-point window system, same setting
A_STAR_UNIT = np.array([
    [9.0, 1.0, -5.0, 0.0, 1.0, 0.0],
    [1.0, 2.0, 0.0, 0.0, 0.0, 0.0],
    [-5.0, 0.0, 8.0, 1.0, -3.0, 0.0],
    [0.0, 0.0, 1.0, 2.0, 0.0, 0.0],
    [1.0, 0.0, -3.0, 0.0, 3.0, 1.0],
    [0.0, 0.0, 0.0, 0.0, 1.0, 2.0],
])


@pytest.mark.parametrize("args, expected", [((2.0, 1.0, 1e-10), 0.5), ((7.0, 7.0, 1e-10), 5e9), ((0.0, 4.0, 1e-10), 0.125)])
def test_weight_p(args, expected):
    assert irls_weight_p(*args) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("args, expected", [((3.0, 2.0, 1.0, 1e-10), 5e9), ((4.0, 1.0, 0.0, 1e-10), 0.25),
                                            ((0.0, 0.0, 1.0, 1e-10), 0.5)])
def test_weight_q(args, expected):
    assert irls_weight_q(*args) == pytest.approx(expected, rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(-1e8, 1e8), b=st.floats(-1e8, 1e8), c=st.floats(-1e8, 1e8))
def test_weights_positive_and_finite(a, b, c):
    for w in (irls_weight_p(a, b, 1e-10), irls_weight_q(a, b, c, 1e-10)):
        assert 0 < w < np.inf


def test_batch_rhs_is_stacked_y():
    sys_ = build_batch_system(np.array([1.0, 2.0, 3.0]), 2, IrlsWeights.ones_batch(3), 1.0, 1.0)
    np.testing.assert_array_equal(sys_.b, [1, 2, 3, 1, 2, 3])


def test_batch_matrix_matches_dense_gram():
    y = np.arange(6.0)
    sys_ = build_batch_system(y, 2, IrlsWeights.ones_batch(6), 1.0, 1.0, ridge=0.0)
    A, b = dense_batch_system(y, 2, np.ones(5), np.ones(4), 1.0, 1.0)
    np.testing.assert_array_equal(sys_.A.toarray(), A)
    np.testing.assert_array_equal(sys_.b, b)


def test_batch_matrix_weighted_and_ridged():
    rng = np.random.default_rng(0)
    n, T = 23, 5
    y = rng.standard_normal(n)
    w = IrlsWeights(rng.uniform(0.1, 3, n - 1), rng.uniform(0.1, 3, n - 2))
    sys_ = build_batch_system(y, T, w, 2.5, 0.5, ridge=1e-3)
    A, _ = dense_batch_system(y, T, w.p, w.q, 2.5, 0.5, ridge=1e-3)
    np.testing.assert_allclose(sys_.A.toarray(), A, rtol=1e-14, atol=1e-14)
    dense = sys_.A.toarray()
    np.testing.assert_array_equal(dense, dense.T)


def test_batch_null_direction_and_anchor():
    n = 8
    x = np.concatenate([-np.ones(n), np.ones(n)])
    w = IrlsWeights.ones_batch(n)
    free = build_batch_system(np.zeros(n), 3, w, 1.0, 1.0, ridge=0.0)
    np.testing.assert_array_equal(free.A @ x, 0.0)
    anchored = build_batch_system(np.zeros(n), 3, w, 1.0, 1.0, ridge=1e-6)
    assert np.abs(anchored.A @ x).max() > 0


def test_online_system_matches_dense_and_figure_block():
    y = np.arange(5.0)
    sys_ = build_online_system(y, np.zeros(5), IrlsWeights(np.ones(5), np.ones(5)), 1.0, 1.0)
    A, b = dense_online_system(y, np.zeros(5), np.ones(5), np.ones(5), 1.0, 1.0)
    np.testing.assert_array_equal(sys_.A.to_dense(), A)
    np.testing.assert_array_equal(A[-4:, -4:], A_O_UNIT)
    np.testing.assert_array_equal(sys_.b, b)


@settings(max_examples=30, deadline=None)
@given(m=st.integers(5, 40), seed=st.integers(0, 2**32 - 1))
def test_online_bandwidth_is_four(m, seed):
    rng = np.random.default_rng(seed)
    w = IrlsWeights(rng.uniform(0.01, 100, m), rng.uniform(0.01, 100, m))
    sys_ = build_online_system(rng.standard_normal(m), rng.standard_normal(m), w, 1.3, 0.4)
    assert sys_.A.measured_bandwidth() == 4
    dense = sys_.A.to_dense()
    np.testing.assert_array_equal(dense, dense.T)
    A, b = dense_online_system(np.zeros(m), np.zeros(m), w.p, w.q, 1.3, 0.4)
    np.testing.assert_allclose(dense, A, rtol=1e-13, atol=1e-13)


def test_online_rhs_without_seasonal_anchor():
    y = np.array([1.0, -2.0, 0.5, 4.0])
    sys_ = build_online_system(y, np.zeros(4), IrlsWeights(np.ones(4), np.ones(4)), 1.0, 1.0)
    np.testing.assert_array_equal(sys_.b, np.repeat(y, 2))


def test_tail_block_is_bottom_right_of_full_system():
    rng = np.random.default_rng(1)
    y, u = rng.standard_normal(6), rng.standard_normal(6)
    p, q = rng.uniform(0.5, 2, 6), rng.uniform(0.5, 2, 6)
    A_star, b_star = tail_block(6, p[3:], q[3:], y[3:], u[3:], 1.7, 0.3)
    sys_ = build_online_system(y, u, IrlsWeights(p, q), 1.7, 0.3)
    np.testing.assert_allclose(A_star, sys_.A.to_dense()[-6:, -6:], rtol=1e-15)
    np.testing.assert_array_equal(b_star, sys_.b[-6:])


def test_tail_block_unit_weights_frozen():
    ones = np.ones(3)
    A_star, _ = tail_block(6, ones, ones, np.zeros(3), np.zeros(3), 1.0, 1.0)
    np.testing.assert_array_equal(A_star, A_STAR_UNIT)


def test_tail_block_seasonal_anchor_changes_rhs_only():
    ones = np.ones(3)
    y3 = np.array([1.0, 2.0, 3.0])
    A0, b0 = tail_block(9, ones * 2, ones * 3, y3, np.array([0.1, 0.2, 0.3]), 1.0, 1.0)
    A1, b1 = tail_block(9, ones * 2, ones * 3, y3, np.array([0.1, 0.2, -0.7]), 1.0, 1.0)
    np.testing.assert_array_equal(A0, A1)
    assert not np.array_equal(b0, b1)


def test_joint_stl_pure_sinusoid():
    T = 24
    t = np.arange(10 * T)
    wave = np.sin(2 * np.pi * t / T)
    d = joint_stl(wave, T, 1.0, 1.0, max_iters=8)
    assert np.abs(d.residual[2 * T:]).max() <= 1e-4
    folded = d.seasonal[2 * T:].reshape(-1, T).mean(axis=0)
    np.testing.assert_allclose(folded, wave[2 * T : 3 * T], atol=1e-3)


def test_joint_stl_constant():
    # a flat trend drives the weights to the 1e-10 floor
    d = joint_stl(np.full(60, 4.0), 10, 1.0, 1.0)
    np.testing.assert_allclose(d.trend, 4.0, atol=1e-9)
    np.testing.assert_allclose(d.seasonal, 0.0, atol=1e-9)
    np.testing.assert_allclose(d.residual, 0.0, atol=1e-9)
    assert abs(d.seasonal.mean()) < 1e-12


def test_joint_stl_seasonal_has_zero_mean():
    rng = np.random.default_rng(7)
    y = 5.0 + np.sin(np.arange(120)) + 0.1 * rng.standard_normal(120)
    d = joint_stl(y, 7, 3.0, 3.0)
    assert abs(d.seasonal.mean()) < 1e-12
    assert abs(d.trend.mean() - 5.0) < 0.1


def test_joint_stl_first_round_matches_dense_solve():
    rng = np.random.default_rng(2)
    n, T = 40, 6
    y = np.sin(np.arange(n)) + rng.standard_normal(n) * 0.1
    first = next(joint_stl_iterates(y, T, 2.0, 3.0, ridge=1e-4))
    A, b = dense_batch_system(y, T, np.ones(n - 1), np.ones(n - 2), 2.0, 3.0, ridge=1e-4)
    x = np.linalg.solve(A, b)
    np.testing.assert_allclose(first.trend, x[:n], atol=1e-8)
    np.testing.assert_allclose(first.seasonal, x[n:], atol=1e-8)


def test_large_band_path_agrees_with_banded(monkeypatch):
    rng = np.random.default_rng(3)
    n, T = 200, 12
    y = np.sin(2 * np.pi * np.arange(n) / T) + 0.1 * rng.standard_normal(n)
    sys_ = build_batch_system(y, T, IrlsWeights.ones_batch(n), 1.0, 1.0, ridge=1e-6)
    banded_x = solve_batch_system(sys_, T)
    monkeypatch.setattr(batch, "BANDED_WORK_LIMIT", 0)
    sparse_x = solve_batch_system(sys_, T)
    np.testing.assert_allclose(banded_x, sparse_x, atol=1e-9)


def test_auxiliary_objective_recovers_original():
    rng = np.random.default_rng(4)
    for _ in range(5):
        n, T = 30, 5
        y = rng.standard_normal(n)
        tau = np.cumsum(rng.standard_normal(n))
        tau[10:13] = tau[10]  # exact zero differences exercise the floor
        s = rng.standard_normal(n)
        eps = 1e-10
        obj = batch_objective(y, tau, s, T, 1.5, 0.5, eps)
        aux = auxiliary_objective(y, tau, s, T, 1.5, 0.5, IrlsWeights.from_trend(tau, eps))
        assert abs(aux - obj) <= 1e-9 * max(1.0, obj) + n * eps


def test_irls_objective_non_increasing():
    rng = np.random.default_rng(5)
    n, T = 300, 25
    t = np.arange(n)
    y = np.where(t > 150, 1.0, 0.0) + np.sin(2 * np.pi * t / T) + 0.1 * rng.standard_normal(n)
    ridge = 1e-8 * n
    vals = [batch_objective(y, d.trend, d.seasonal, T, 5.0, 5.0, 1e-10, ridge)
            for d in joint_stl_iterates(y, T, 5.0, 5.0, 10, ridge)]
    assert all(b <= a + 1e-9 * max(1.0, abs(a)) for a, b in zip(vals, vals[1:]))


def test_modified_constant_stream():
    cfg = Config(period=5, shift_window=0, max_iters=3)
    pts = modified_joint_stl(np.full(20, 2.0), np.full(10, 2.0), cfg)
    for pt in pts:
        assert abs(pt.trend - 2.0) < 1e-9 and abs(pt.seasonal) < 1e-9 and abs(pt.residual) < 1e-9


def test_modified_single_point_is_two_by_two_solve():
    rng = np.random.default_rng(6)
    y_init = np.sin(2 * np.pi * np.arange(20) / 5) + 0.1 * rng.standard_normal(20)
    cfg = Config(period=5, shift_window=0, max_iters=1, warm_len=0)
    (pt,) = modified_joint_stl(y_init, np.array([0.7]), cfg)
    v = joint_stl(y_init, 5, 1.0, 1.0, 1).seasonal[-5:]
    u = v[20 % 5]
    x = np.linalg.solve(np.array([[1.0, 1.0], [1.0, 2.0]]), np.array([0.7, 0.7 + u]))
    np.testing.assert_allclose([pt.trend, pt.seasonal], x, atol=1e-12)


def test_modified_rejects_non_finite():
    cfg = Config(period=5, shift_window=0, max_iters=1)
    with pytest.raises(NonFiniteInput):
        modified_joint_stl(np.ones(20), np.array([1.0, np.inf]), cfg)


def test_batch_requires_enough_points():
    with pytest.raises(ValueError):
        build_batch_system(np.ones(3), 3, IrlsWeights.ones_batch(3), 1.0, 1.0)
    with pytest.raises(ValueError):
        joint_stl(np.ones(7), 4, 1.0, 1.0)
