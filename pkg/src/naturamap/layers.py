"""Stateful NCHW layers with hand-written backward passes.

Every layer owns its parameters and gradient buffers; ``forward
(x, train=True)`` caches what backward needs, ``backward(dy)`` returns dx
and fills the gradient buffers.  All arrays share one dtype (float32 for
training, float64 for the finite-difference harness).

Convolutions run per-sample im2col + BLAS matmul through the kernels
backend; everything else is plain vectorized numpy shared by both backends.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ShapeError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def kaiming_normal(rng: np.random.Generator, shape, fan_in: int, dtype):
    """Fan-in scaled normal init (He)."""
    std = np.sqrt(2.0 / fan_in)
    return (rng.standard_normal(shape) * std).astype(dtype)


class Conv3x3:
    """3x3 convolution, stride 1, zero padding 1 (same spatial size)."""

    def __init__(self, cin, cout, rng, dtype=np.float32):
        self.cin, self.cout = cin, cout
        self.w = kaiming_normal(rng, (cout, cin, 3, 3), cin * 9, dtype)
        self.b = np.zeros(cout, dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def forward(self, x, train=True):
        n, cin, h, w = x.shape
        if cin != self.cin:
            raise ShapeError(f"conv3x3 expects {self.cin} channels, got {cin}")
        if train:
            self._x = x
        wm = self.w.reshape(self.cout, cin * 9)
        y = np.empty((n, self.cout, h, w), x.dtype)
        cols = np.empty((cin * 9, h * w), x.dtype)
        for i in range(n):
            kernels.im2col3x3(x[i], cols)
            np.matmul(wm, cols, out=y[i].reshape(self.cout, h * w))
        y += self.b.reshape(1, -1, 1, 1)
        return y

    def backward(self, dy):
        x = self._x
        n, cin, h, w = x.shape
        wm = self.w.reshape(self.cout, cin * 9)
        wmt = np.ascontiguousarray(wm.T)
        self.db[...] = dy.sum(axis=(0, 2, 3))
        dwm = np.zeros((self.cout, cin * 9), x.dtype)
        dx = np.empty_like(x)
        cols = np.empty((cin * 9, h * w), x.dtype)
        dcols = np.empty_like(cols)
        for i in range(n):
            kernels.im2col3x3(x[i], cols)
            dyf = dy[i].reshape(self.cout, h * w)
            dwm += dyf @ cols.T
            np.matmul(wmt, dyf, out=dcols)
            kernels.col2im3x3(dcols, dx[i])
        self.dw[...] = dwm.reshape(self.w.shape)
        return dx

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.dw, "b": self.db}


class Conv1x1:
    """1x1 convolution (per-pixel linear map)."""

    def __init__(self, cin, cout, rng, dtype=np.float32):
        self.cin, self.cout = cin, cout
        self.w = kaiming_normal(rng, (cout, cin), cin, dtype)
        self.b = np.zeros(cout, dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def forward(self, x, train=True):
        n, cin, h, w = x.shape
        if cin != self.cin:
            raise ShapeError(f"conv1x1 expects {self.cin} channels, got {cin}")
        if train:
            self._x = x
        y = np.matmul(self.w, x.reshape(n, cin, h * w)).reshape(n, self.cout, h, w)
        y += self.b.reshape(1, -1, 1, 1)
        return y

    def backward(self, dy):
        x = self._x
        n, cin, h, w = x.shape
        xf = x.reshape(n, cin, h * w)
        dyf = dy.reshape(n, self.cout, h * w)
        self.db[...] = dy.sum(axis=(0, 2, 3))
        self.dw[...] = np.matmul(dyf, xf.transpose(0, 2, 1)).sum(axis=0)
        return np.matmul(self.w.T, dyf).reshape(x.shape)

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.dw, "b": self.db}


class ConvT2x2:
    """2x2 transposed convolution, stride 2 (doubles the spatial extent)."""

    def __init__(self, cin, cout, rng, dtype=np.float32):
        self.cin, self.cout = cin, cout
        self.w = kaiming_normal(rng, (cin, cout, 2, 2), cin, dtype)
        self.b = np.zeros(cout, dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def forward(self, x, train=True):
        n, cin, h, w = x.shape
        if cin != self.cin:
            raise ShapeError(f"convT2x2 expects {self.cin} channels, got {cin}")
        if train:
            self._x = x
        wt = self.w.reshape(cin, self.cout * 4)
        t = np.matmul(wt.T, x.reshape(n, cin, h * w))
        # (n, cout, 2, 2, h, w) -> interleave the 2x2 taps into the output grid
        t = t.reshape(n, self.cout, 2, 2, h, w).transpose(0, 1, 4, 2, 5, 3)
        y = np.ascontiguousarray(t).reshape(n, self.cout, 2 * h, 2 * w)
        y += self.b.reshape(1, -1, 1, 1)
        return y

    def backward(self, dy):
        x = self._x
        n, cin, h, w = x.shape
        self.db[...] = dy.sum(axis=(0, 2, 3))
        dyt = dy.reshape(n, self.cout, h, 2, w, 2).transpose(0, 1, 3, 5, 2, 4)
        dyt = np.ascontiguousarray(dyt).reshape(n, self.cout * 4, h * w)
        wt = self.w.reshape(cin, self.cout * 4)
        xf = x.reshape(n, cin, h * w)
        self.dw[...] = np.matmul(xf, dyt.transpose(0, 2, 1)).sum(axis=0).reshape(self.w.shape)
        return np.matmul(wt, dyt).reshape(x.shape)

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.dw, "b": self.db}


class BatchNorm:
    """Per-channel batch normalization over (N, H, W).

    ``frozen_stats=True`` pins normalization to the running statistics and
    stops their updates, even when forward runs in train mode (used for
    frozen components and the finite-difference harness).
    """

    def __init__(self, c, dtype=np.float32):
        self.c = c
        self.gamma = np.ones(c, dtype)
        self.beta = np.zeros(c, dtype)
        self.running_mean = np.zeros(c, dtype)
        self.running_var = np.ones(c, dtype)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self.frozen_stats = False
        self._cache = None

    def forward(self, x, train=True):
        use_batch = train and not self.frozen_stats
        if use_batch:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            self.running_mean[...] = ((1 - BN_MOMENTUM) * self.running_mean
                                      + BN_MOMENTUM * mean)
            self.running_var[...] = ((1 - BN_MOMENTUM) * self.running_var
                                     + BN_MOMENTUM * var)
        else:
            mean = self.running_mean
            var = self.running_var
        invstd = 1.0 / np.sqrt(var + x.dtype.type(BN_EPS))
        xhat = (x - mean.reshape(1, -1, 1, 1)) * invstd.reshape(1, -1, 1, 1)
        if train:
            self._cache = (xhat, invstd, use_batch)
        return self.gamma.reshape(1, -1, 1, 1) * xhat + self.beta.reshape(1, -1, 1, 1)

    def backward(self, dy):
        xhat, invstd, used_batch = self._cache
        self.dgamma[...] = (dy * xhat).sum(axis=(0, 2, 3))
        self.dbeta[...] = dy.sum(axis=(0, 2, 3))
        g = (self.gamma * invstd).reshape(1, -1, 1, 1)
        if not used_batch:
            return dy * g
        n, _, h, w = dy.shape
        m = n * h * w
        sum_dy = dy.sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1)
        sum_dy_xhat = (dy * xhat).sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1)
        return g * (dy - (sum_dy + xhat * sum_dy_xhat) / m)

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta,
                "running_mean": self.running_mean, "running_var": self.running_var}

    def grads(self):
        return {"gamma": self.dgamma, "beta": self.dbeta}


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x, train=True):
        if train:
            self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dy):
        return dy * self._mask

    def params(self):
        return {}

    def grads(self):
        return {}


class Sigmoid:
    def __init__(self):
        self._y = None

    def forward(self, x, train=True):
        y = 1.0 / (1.0 + np.exp(-x))
        if train:
            self._y = y
        return y

    def backward(self, dy):
        y = self._y
        return dy * y * (1.0 - y)

    def params(self):
        return {}

    def grads(self):
        return {}


class MaxPool2x2:
    def __init__(self):
        self._idx = None
        self._shape = None

    def forward(self, x, train=True):
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"maxpool2x2 needs even extents, got {h}x{w}")
        y, idx = kernels.maxpool2x2(x.reshape(n * c, h, w))
        if train:
            self._idx = idx
            self._shape = x.shape
        return y.reshape(n, c, h // 2, w // 2)

    def backward(self, dy):
        n, c, h, w = self._shape
        dx = np.empty((n * c, h, w), dy.dtype)
        kernels.maxpool2x2_backward(
            np.ascontiguousarray(dy.reshape(n * c, h // 2, w // 2)), self._idx, dx)
        return dx.reshape(n, c, h, w)

    def params(self):
        return {}

    def grads(self):
        return {}


class UpNearest2x:
    def forward(self, x, train=True):
        return x.repeat(2, axis=2).repeat(2, axis=3)

    def backward(self, dy):
        n, c, h2, w2 = dy.shape
        return dy.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))

    def params(self):
        return {}

    def grads(self):
        return {}


class ConvBlock:
    """conv3x3 -> batch-norm -> ReLU, twice."""

    def __init__(self, cin, cout, rng, dtype=np.float32):
        self.layers = [Conv3x3(cin, cout, rng, dtype), BatchNorm(cout, dtype), ReLU(),
                       Conv3x3(cout, cout, rng, dtype), BatchNorm(cout, dtype), ReLU()]

    def forward(self, x, train=True):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def params(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.params().items():
                out[f"l{i}.{k}"] = v
        return out

    def grads(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.grads().items():
                out[f"l{i}.{k}"] = v
        return out

    def batchnorms(self):
        return [l for l in self.layers if isinstance(l, BatchNorm)]
