"""Layer-level oracles: direct convolution references and finite differences."""
import numpy as np
import pytest

from naturamap.layers import (BatchNorm, Conv1x1, Conv3x3, ConvBlock, ConvT2x2,
                              MaxPool2x2, ReLU, Sigmoid, UpNearest2x)

F64 = np.float64


def naive_conv3x3(x, w, b):
    n, cin, h, ww = x.shape
    cout = w.shape[0]
    xp = np.zeros((n, cin, h + 2, ww + 2), x.dtype)
    xp[:, :, 1:h + 1, 1:ww + 1] = x
    y = np.zeros((n, cout, h, ww), x.dtype)
    for bi in range(n):
        for co in range(cout):
            for i in range(h):
                for j in range(ww):
                    y[bi, co, i, j] = (w[co] * xp[bi, :, i:i + 3, j:j + 3]).sum() + b[co]
    return y


def naive_convT2x2(x, w, b):
    n, cin, h, ww = x.shape
    cout = w.shape[1]
    y = np.zeros((n, cout, 2 * h, 2 * ww), x.dtype)
    for bi in range(n):
        for co in range(cout):
            for i in range(h):
                for j in range(ww):
                    for di in range(2):
                        for dj in range(2):
                            y[bi, co, 2 * i + di, 2 * j + dj] = (
                                x[bi, :, i, j] @ w[:, co, di, dj]) + b[co]
    return y


def test_conv3x3_forward_matches_naive(rng):
    layer = Conv3x3(3, 4, rng, F64)
    x = rng.standard_normal((2, 3, 5, 6))
    assert np.allclose(layer.forward(x), naive_conv3x3(x, layer.w, layer.b),
                       atol=1e-12)


def test_convT2x2_forward_matches_naive(rng):
    layer = ConvT2x2(3, 2, rng, F64)
    x = rng.standard_normal((2, 3, 4, 3))
    assert np.allclose(layer.forward(x), naive_convT2x2(x, layer.w, layer.b),
                       atol=1e-12)


def fd_check(layer, x, rng, params=True, h=1e-6, tol=1e-5, forward=None):
    """Central finite differences vs analytic gradients, float64."""
    fwd = forward or (lambda: layer.forward(x, train=True))
    y = fwd()
    dy = rng.standard_normal(y.shape)
    loss = lambda out: float((out * dy).sum())
    dx = layer.backward(dy)

    def numeric(arr):
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gf = g.ravel()
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            lp = loss(fwd())
            flat[k] = orig - h
            lm = loss(fwd())
            flat[k] = orig
            gf[k] = (lp - lm) / (2 * h)
        return g

    gx = numeric(x)
    assert np.max(np.abs(gx - dx)) < tol * max(1.0, np.max(np.abs(gx))), "input grad"
    if params:
        analytic = layer.grads()
        for name, p in layer.params().items():
            if name.endswith(("running_mean", "running_var")):
                continue
            gn = numeric(p)
            ga = analytic[name]
            err = np.max(np.abs(gn - ga)) / max(1.0, np.max(np.abs(gn)))
            assert err < tol, f"param {name}: {err}"


def test_conv3x3_gradients(rng):
    layer = Conv3x3(2, 3, rng, F64)
    fd_check(layer, rng.standard_normal((2, 2, 4, 5)), rng)


def test_conv1x1_gradients(rng):
    layer = Conv1x1(3, 2, rng, F64)
    fd_check(layer, rng.standard_normal((2, 3, 4, 4)), rng)


def test_convT2x2_gradients(rng):
    layer = ConvT2x2(3, 2, rng, F64)
    fd_check(layer, rng.standard_normal((2, 3, 3, 4)), rng)


def test_batchnorm_train_gradients(rng):
    layer = BatchNorm(3, F64)
    fd_check(layer, rng.standard_normal((4, 3, 3, 3)), rng, tol=1e-4)


def test_batchnorm_frozen_gradients(rng):
    layer = BatchNorm(3, F64)
    layer.running_mean[...] = rng.standard_normal(3)
    layer.running_var[...] = 0.5 + rng.random(3)
    layer.frozen_stats = True
    fd_check(layer, rng.standard_normal((2, 3, 4, 4)), rng)


def test_batchnorm_running_stats_update_only_in_train(rng):
    layer = BatchNorm(2, np.float32)
    x = rng.standard_normal((4, 2, 3, 3)).astype(np.float32)
    rm0 = layer.running_mean.copy()
    layer.forward(x, train=False)
    assert np.array_equal(layer.running_mean, rm0)
    layer.forward(x, train=True)
    assert not np.array_equal(layer.running_mean, rm0)
    layer.frozen_stats = True
    rm1 = layer.running_mean.copy()
    layer.forward(x, train=True)
    assert np.array_equal(layer.running_mean, rm1)


def test_relu_and_sigmoid_gradients(rng):
    x = rng.standard_normal((2, 3, 4, 4)) + 0.1  # keep away from the kink
    fd_check(ReLU(), x, rng, params=False)
    fd_check(Sigmoid(), rng.standard_normal((2, 3, 4, 4)), rng, params=False)


def test_maxpool_gradients(rng):
    fd_check(MaxPool2x2(), rng.standard_normal((2, 3, 6, 4)), rng, params=False)


def test_upsample_gradients(rng):
    fd_check(UpNearest2x(), rng.standard_normal((2, 3, 3, 4)), rng, params=False)


def test_convblock_gradients_frozen_stats(rng):
    block = ConvBlock(2, 3, rng, F64)
    for bn in block.batchnorms():
        bn.frozen_stats = True
        bn.running_mean[...] = 0.1 * rng.standard_normal(bn.c)
        bn.running_var[...] = 0.5 + rng.random(bn.c)
    fd_check(block, rng.standard_normal((1, 2, 4, 4)), rng, tol=1e-4)


def test_upsample_exact_semantics():
    x = np.arange(4, dtype=np.float32).reshape(1, 1, 2, 2)
    y = UpNearest2x().forward(x)
    assert np.array_equal(y[0, 0], np.array([[0, 0, 1, 1], [0, 0, 1, 1],
                                             [2, 2, 3, 3], [2, 2, 3, 3]],
                                            dtype=np.float32))
