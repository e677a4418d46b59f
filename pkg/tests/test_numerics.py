import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sigmageom.newton import fd_jacobian, gauss_newton
from sigmageom.sampling import Box, map_blocks, stream


def test_stream_keyed_and_reproducible():
    a = stream(1, "x", 0).random(5)
    assert np.array_equal(a, stream(1, "x", 0).random(5))
    assert not np.array_equal(a, stream(1, "y", 0).random(5))
    assert not np.array_equal(a, stream(1, "x", 1).random(5))
    assert not np.array_equal(a, stream(2, "x", 0).random(5))


def test_box_sampling():
    b = Box(np.array([0.0, -1.0]), np.array([1.0, 1.0]))
    u = b.uniform(5000, 0, "t")
    h = b.halton(512, 0)
    assert b.contains(u).all() and b.contains(h).all()
    assert np.array_equal(u, b.uniform(5000, 0, "t"))
    # prefix stability: blockwise draws do not depend on the total count
    assert np.array_equal(b.uniform(3000, 0, "t"), u[:3000])
    assert b.diameter == pytest.approx(np.sqrt(5))
    with pytest.raises(ValueError):
        Box(np.array([1.0]), np.array([0.0]))


def test_box_around_inflates():
    b = Box.around(np.array([[0.0, 0.0], [1.0, 0.0]]), inflate=3.0)
    assert np.allclose(b.hi - b.lo, [3.0, 3.0])
    assert b.contains(np.array([[0.5, 0.0]])).all()


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5000), st.integers(1, 8), st.integers(1, 700))
def test_map_blocks_order_independent(n, workers, block):
    parts = map_blocks(lambda a, b: np.arange(a, b), n, workers, block)
    assert np.array_equal(np.concatenate(parts), np.arange(n))


def test_gauss_newton_linear_system():
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    y = np.array([1.0, 2.0])
    x, r = gauss_newton(lambda X: X @ A.T - y, np.zeros((3, 2)) + [[0, 0], [5, 5], [-3, 1]])
    assert np.allclose(x, np.linalg.solve(A, y), atol=1e-12)


def test_gauss_newton_tangential_root():
    # x^2 = 0 has a double root; convergence is linear but must reach the floor
    x, r = gauss_newton(lambda X: X ** 2, np.array([[1.0], [-0.5]]))
    assert np.all(np.abs(x) < 1e-7)


def test_gauss_newton_underdetermined_circle():
    x0 = stream(0, "c").normal(size=(50, 2))
    x, r = gauss_newton(lambda X: (np.sum(X * X, axis=1) - 1.0)[:, None], x0)
    assert np.allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-12)


def test_gauss_newton_workers_identical():
    x0 = stream(0, "w").normal(size=(1000, 3))
    f = lambda X: np.stack([np.sum(X * X, axis=1) - 1, X[:, 0] - X[:, 1] ** 3], axis=1)
    a = gauss_newton(f, x0, workers=1)
    b = gauss_newton(f, x0, workers=8)
    assert np.array_equal(a[0], b[0])


def test_fd_jacobian_oracle():
    x = np.array([[0.3, -0.7]])
    J = fd_jacobian(lambda X: np.stack([X[:, 0] * X[:, 1], np.sin(X[:, 0])], axis=1), x)
    assert np.allclose(J[0], [[-0.7, 0.3], [np.cos(0.3), 0.0]], atol=1e-8)
