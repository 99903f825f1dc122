"""Pure numpy kernels: the fallback backend.

Same contracts as the compiled backend, bit-for-bit: identical gather order
for im2col, identical offset-major accumulation order for col2im, and
first-occurrence argmax for pooling ties.
"""
from __future__ import annotations

import numpy as np

NAME = "numpy"


def im2col3x3(x: np.ndarray, cols: np.ndarray) -> None:
    """Unfold a (C, H, W) image into (C*9, H*W) columns, zero-padded by 1.

    cols[c*9 + ki*3 + kj, i*W + j] = xpad[c, i + ki, j + kj]
    """
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    view = cols.reshape(c, 9, h * w)
    for k in range(9):
        ki, kj = divmod(k, 3)
        view[:, k, :] = xp[:, ki:ki + h, kj:kj + w].reshape(c, h * w)


def col2im3x3(dcols: np.ndarray, dx: np.ndarray) -> None:
    """Adjoint of im2col3x3: fold (C*9, H*W) columns back into (C, H, W).

    dx is overwritten.  Accumulation runs offset-major (k = 0..8) so results
    match the compiled backend bitwise.
    """
    c, h, w = dx.shape
    dxp = np.zeros((c, h + 2, w + 2), dtype=dx.dtype)
    view = dcols.reshape(c, 9, h * w)
    for k in range(9):
        ki, kj = divmod(k, 3)
        dxp[:, ki:ki + h, kj:kj + w] += view[:, k, :].reshape(c, h, w)
    dx[...] = dxp[:, 1:h + 1, 1:w + 1]


def maxpool2x2(x: np.ndarray):
    """2x2/stride-2 max pool of (C, H, W); returns (y, idx).

    idx in {0..3} is the window position of the max, first occurrence in
    row-major window order.
    """
    v = np.stack([x[:, 0::2, 0::2], x[:, 0::2, 1::2],
                  x[:, 1::2, 0::2], x[:, 1::2, 1::2]])
    idx = np.argmax(v, axis=0).astype(np.uint8)
    return v.max(axis=0), idx


def maxpool2x2_backward(dy: np.ndarray, idx: np.ndarray, dx: np.ndarray) -> None:
    """Scatter pooled gradients back to the argmax positions; dx overwritten."""
    zero = np.zeros((), dtype=dy.dtype)
    dx[:, 0::2, 0::2] = np.where(idx == 0, dy, zero)
    dx[:, 0::2, 1::2] = np.where(idx == 1, dy, zero)
    dx[:, 1::2, 0::2] = np.where(idx == 2, dy, zero)
    dx[:, 1::2, 1::2] = np.where(idx == 3, dy, zero)
