import numpy as np
import pytest

from proxmmr.errors import DimensionError, DomainError
from proxmmr.tensor import Rng, as_matrix, matmul, ones, transpose, zeros


def test_matmul_identity():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(np.eye(2), m), m)


def test_matmul_hand_value():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[1.0], [1.0]])
    assert np.array_equal(matmul(a, b), np.array([[3.0], [7.0]]))


def test_matmul_zero():
    assert np.array_equal(matmul(zeros(2, 3), ones(3, 1)), zeros(2, 1))


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(zeros(2, 3), zeros(2, 3))


def test_matmul_associativity():
    rng = Rng(11)
    for _ in range(20):
        a = rng.normal(0, 1, (4, 3))
        b = rng.normal(0, 1, (3, 5))
        c = rng.normal(0, 1, (5, 2))
        left = matmul(matmul(a, b), c)
        right = matmul(a, matmul(b, c))
        assert np.abs(left - right).max() <= 1e-12 * max(1.0, np.abs(left).max())


def test_transpose_involution():
    m = Rng(5).normal(0, 1, (3, 7))
    assert np.array_equal(transpose(transpose(m)), m)


def test_as_matrix_shapes():
    assert as_matrix(3.0).shape == (1, 1)
    assert as_matrix([1.0, 2.0]).shape == (2, 1)


def test_normal_zero_std_is_constant():
    x = Rng(1).normal(2.5, 0.0, (4, 4))
    assert np.all(x == 2.5)


def test_normal_negative_std_rejected():
    with pytest.raises(DomainError):
        Rng(1).normal(0.0, -1.0, (2, 2))


def test_rng_determinism():
    a = Rng(42).normal(0, 1, (100, 3))
    b = Rng(42).normal(0, 1, (100, 3))
    assert np.array_equal(a, b)
    u1 = Rng(42).uniform(-1, 1, (100, 3))
    u2 = Rng(42).uniform(-1, 1, (100, 3))
    assert np.array_equal(u1, u2)


def test_normal_moments():
    # law of large numbers: sample mean within 4 std/sqrt(n)
    n = 10 ** 6
    x = Rng(7).normal(1.5, 2.0, (n, 1))
    assert abs(x.mean() - 1.5) < 4 * 2.0 / np.sqrt(n)


def test_uniform_bounds_and_moments():
    n = 10 ** 6
    x = Rng(9).uniform(0.0, 10.0, (n, 1))
    assert x.min() >= 0.0 and x.max() < 10.0
    assert abs(x.mean() - 5.0) < 0.05


def test_uniform_degenerate():
    x = Rng(3).uniform(2.0, 2.0, (5, 1))
    assert np.all(x == 2.0)


def test_uniform_bad_bounds():
    with pytest.raises(DomainError):
        Rng(3).uniform(1.0, 0.0, (2, 2))


def test_spawn_independent_streams():
    base = Rng(100)
    a = base.spawn(1).normal(0, 1, (10, 1))
    b = base.spawn(2).normal(0, 1, (10, 1))
    assert not np.array_equal(a, b)
    assert np.array_equal(a, Rng(100 ^ 1).normal(0, 1, (10, 1)))
