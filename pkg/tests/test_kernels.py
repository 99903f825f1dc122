"""Kernel contracts: naive-loop oracles, adjointness, and backend equality."""
import numpy as np
import pytest

from naturamap import kernels
from naturamap.kernels import get_backend


def naive_im2col(x):
    c, h, w = x.shape
    xp = np.zeros((c, h + 2, w + 2), x.dtype)
    xp[:, 1:h + 1, 1:w + 1] = x
    cols = np.zeros((c * 9, h * w), x.dtype)
    for ci in range(c):
        for ki in range(3):
            for kj in range(3):
                for i in range(h):
                    for j in range(w):
                        cols[ci * 9 + ki * 3 + kj, i * w + j] = xp[ci, i + ki, j + kj]
    return cols


def backends():
    return [get_backend(n) for n in kernels.available_backends()]


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_im2col_matches_naive(rng, dtype):
    x = rng.standard_normal((3, 5, 4)).astype(dtype)
    expect = naive_im2col(x)
    for be in backends():
        cols = np.empty((27, 20), dtype)
        be.im2col3x3(x, cols)
        assert np.array_equal(cols, expect), be.NAME


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_col2im_is_adjoint(rng, dtype):
    # <im2col(x), d> == <x, col2im(d)> defines the exact adjoint
    x = rng.standard_normal((2, 6, 5)).astype(dtype)
    d = rng.standard_normal((18, 30)).astype(dtype)
    for be in backends():
        cols = np.empty((18, 30), dtype)
        be.im2col3x3(x, cols)
        dx = np.empty_like(x)
        be.col2im3x3(d, dx)
        lhs = np.vdot(cols.astype(np.float64), d.astype(np.float64))
        rhs = np.vdot(x.astype(np.float64), dx.astype(np.float64))
        tol = 1e-10 if dtype is np.float64 else 1e-4
        assert abs(lhs - rhs) < tol * max(1.0, abs(lhs)), be.NAME


def test_maxpool_matches_naive(rng):
    x = rng.standard_normal((3, 8, 6)).astype(np.float32)
    for be in backends():
        y, idx = be.maxpool2x2(x)
        for c in range(3):
            for i in range(4):
                for j in range(3):
                    win = x[c, 2 * i:2 * i + 2, 2 * j:2 * j + 2].ravel()
                    assert y[c, i, j] == win.max()
                    assert idx[c, i, j] == int(np.argmax(win))


def test_maxpool_tie_takes_first():
    x = np.zeros((1, 2, 2), dtype=np.float32)  # four-way tie
    for be in backends():
        y, idx = be.maxpool2x2(x)
        assert y[0, 0, 0] == 0.0 and idx[0, 0, 0] == 0


def test_maxpool_backward_scatter(rng):
    x = rng.standard_normal((2, 4, 4)).astype(np.float32)
    dy = rng.standard_normal((2, 2, 2)).astype(np.float32)
    for be in backends():
        y, idx = be.maxpool2x2(x)
        dx = np.empty_like(x)
        be.maxpool2x2_backward(dy, idx, dx)
        assert dx.sum() == pytest.approx(dy.sum(), abs=1e-5)
        # gradient lands exactly on the argmax positions
        for c in range(2):
            for i in range(2):
                for j in range(2):
                    k = idx[c, i, j]
                    assert dx[c, 2 * i + k // 2, 2 * j + k % 2] == dy[c, i, j]
        assert np.count_nonzero(dx) <= dy.size


@pytest.mark.skipif(len(kernels.available_backends()) < 2,
                    reason="compiled backend not built")
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_backends_bitwise_identical(rng, dtype):
    nb, cb = get_backend("numpy"), get_backend("cython")
    for _ in range(5):
        c = int(rng.integers(1, 7))
        h = int(rng.integers(2, 12)) * 2
        w = int(rng.integers(2, 12)) * 2
        x = rng.standard_normal((c, h, w)).astype(dtype)
        c1 = np.empty((c * 9, h * w), dtype)
        c2 = np.empty_like(c1)
        nb.im2col3x3(x, c1)
        cb.im2col3x3(x, c2)
        assert np.array_equal(c1, c2)
        d = rng.standard_normal(c1.shape).astype(dtype)
        g1, g2 = np.empty_like(x), np.empty_like(x)
        nb.col2im3x3(d, g1)
        cb.col2im3x3(d, g2)
        assert np.array_equal(g1, g2)
        y1, i1 = nb.maxpool2x2(x)
        y2, i2 = cb.maxpool2x2(x)
        assert np.array_equal(y1, y2) and np.array_equal(i1, i2)
        dy = rng.standard_normal(y1.shape).astype(dtype)
        b1, b2 = np.empty_like(x), np.empty_like(x)
        nb.maxpool2x2_backward(dy, i1, b1)
        cb.maxpool2x2_backward(dy, i2, b2)
        assert np.array_equal(b1, b2)
