import numpy as np
import pytest

from treevec.numerics import (AdamState, DimensionError, Rng, adam_step,
                              add, cholesky_solve, dot, gauss, matmul, norm,
                              op_norm, scale, sym_eig_topk, transpose)


def test_basic_algebra():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    assert np.allclose(matmul(np.eye(3), a), a)
    assert np.allclose(transpose(matmul(a, b)), matmul(transpose(b), transpose(a)))
    assert dot(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    assert np.allclose(add(a, a), scale(2.0, a))
    assert norm(np.array([3.0, 4.0])) == pytest.approx(5.0)


def test_dimension_errors():
    with pytest.raises(DimensionError):
        matmul(np.eye(3), np.eye(4))
    with pytest.raises(DimensionError):
        add(np.eye(3), np.eye(4))
    with pytest.raises(DimensionError):
        dot(np.zeros(3), np.zeros(4))


def test_cholesky_solve_identity_and_diag():
    b = np.array([[2.0], [4.0]])
    assert np.allclose(cholesky_solve(np.eye(2), b), b)
    assert np.allclose(cholesky_solve(np.diag([2.0, 4.0]), b), np.array([[1.0], [1.0]]))


def test_cholesky_solve_rejects_non_spd():
    with pytest.raises(ValueError):
        cholesky_solve(np.array([[0.0, 0.0], [0.0, 1.0]]), np.zeros((2, 1)))


def test_cholesky_solve_residual_random_spd():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(2, 12))
        m = rng.normal(size=(n, n))
        a = m.T @ m + np.eye(n)
        b = rng.normal(size=(n, 3))
        s = cholesky_solve(a, b)
        assert np.linalg.norm(a @ s - b) <= 1e-8 * np.linalg.norm(b)


def test_sym_eig_examples():
    values, vectors = sym_eig_topk(np.diag([3.0, 1.0, 2.0]), 1)
    assert values[0] == pytest.approx(3.0)
    assert abs(vectors[:, 0] @ np.array([1.0, 0.0, 0.0])) == pytest.approx(1.0)
    v = np.array([1.0, 2.0, 2.0])
    values, _ = sym_eig_topk(np.outer(v, v), 3)
    assert values[0] == pytest.approx(v @ v)
    assert np.allclose(values[1:], 0.0, atol=1e-10)
    values, vectors = sym_eig_topk(np.eye(3), 0)
    assert values.size == 0 and vectors.shape[1] == 0


def test_sym_eig_residuals_random():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n = int(rng.integers(2, 65))
        m = rng.normal(size=(n, n))
        c = (m + m.T) / 2
        k = int(rng.integers(1, n + 1))
        values, vectors = sym_eig_topk(c, k)
        assert np.all(np.diff(values) <= 1e-12)
        for j in range(k):
            assert np.linalg.norm(c @ vectors[:, j] - values[j] * vectors[:, j]) \
                <= 1e-8 * np.linalg.norm(c)
        assert np.allclose(vectors.T @ vectors, np.eye(k), atol=1e-10)


def test_op_norm():
    assert op_norm(np.eye(4)) == pytest.approx(1.0)
    assert op_norm(np.diag([0.5, 2.0])) == pytest.approx(2.0)
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    assert op_norm(0.3 * q) == pytest.approx(0.3)


def test_adam_zero_gradient_no_change():
    params = {"w": np.array([1.0, 2.0])}
    state = AdamState()
    adam_step(state, params, {"w": np.zeros(2)})
    assert np.allclose(params["w"], [1.0, 2.0])
    assert state.step == 1


def test_adam_first_step_is_signed_learning_rate():
    params = {"w": np.array([1.0, -1.0])}
    g = np.array([0.3, -0.7])
    adam_step(AdamState(learning_rate=1e-3), params, {"w": g})
    assert np.allclose(params["w"], [1.0 - 1e-3, -1.0 + 1e-3], atol=1e-6)


def test_rng_reproducible():
    assert np.array_equal(Rng(42).gauss(16), Rng(42).gauss(16))
    r1, r2 = Rng(7), Rng(7)
    assert np.array_equal(r1.integers(0, 100, 10), r2.integers(0, 100, 10))
    assert r1.random() == r2.random()


def test_gauss_moments():
    rng = Rng(0)
    draws = np.stack([gauss(rng, 4) for _ in range(100_000)])
    assert np.all(np.abs(draws.mean(axis=0)) < 0.02)
    assert np.all(np.abs(draws.var(axis=0) - 1.0) < 0.05)
