"""Differentiable ops for the weight-grid network.

Arrays are float64 and channel-first: images and feature maps are
``(N, C, H, W)``, conv kernels ``(C_out, C_in, KH, KW)``. Every op is a
``*_forward`` returning ``(out, cache)`` and a ``*_backward(dout, cache)``.
"""
from __future__ import annotations

from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> Tuple[np.ndarray, np.ndarray]:
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # (N, C, OH, OW, KH, KW) -> (N, OH, OW, C * KH * KW)
    cols = windows.transpose(0, 2, 3, 1, 4, 5)
    n, oh, ow = cols.shape[:3]
    return cols.reshape(n, oh, ow, -1), padded


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, pad: int = 0):
    c_out, c_in, kh, kw = w.shape
    if x.shape[1] != c_in:
        raise ValueError(f"conv expects {c_in} input channels, got {x.shape[1]}")
    cols, padded = _im2col(x, kh, kw, stride, pad)
    out = cols @ w.reshape(c_out, -1).T + b
    cache = (x.shape, padded.shape, cols, w, stride, pad)
    return out.transpose(0, 3, 1, 2), cache


def conv2d_backward(dout: np.ndarray, cache):
    x_shape, padded_shape, cols, w, stride, pad = cache
    c_out, c_in, kh, kw = w.shape
    d = dout.transpose(0, 2, 3, 1)  # (N, OH, OW, C_out)
    db = d.sum(axis=(0, 1, 2))
    dw = np.einsum("nhwo,nhwk->ok", d, cols).reshape(w.shape)
    dcols = (d @ w.reshape(c_out, -1)).reshape(d.shape[:3] + (c_in, kh, kw))

    dpadded = np.zeros(padded_shape)
    oh, ow = d.shape[1], d.shape[2]
    for i in range(kh):
        for j in range(kw):
            rows = slice(i, i + stride * oh, stride)
            cols_ = slice(j, j + stride * ow, stride)
            dpadded[:, :, rows, cols_] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    h, wd = x_shape[2], x_shape[3]
    dx = dpadded[:, :, pad : pad + h, pad : pad + wd]
    return dx, dw, db


def avg_pool_forward(x: np.ndarray, size: int):
    n, c, h, w = x.shape
    if h % size or w % size:
        raise ValueError(f"pool size {size} does not divide feature map {h}x{w}")
    out = x.reshape(n, c, h // size, size, w // size, size).mean(axis=(3, 5))
    return out, (x.shape, size)


def avg_pool_backward(dout: np.ndarray, cache):
    shape, size = cache
    spread = np.repeat(np.repeat(dout, size, axis=2), size, axis=3)
    return spread.reshape(shape) / (size * size)


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0.0), x


def relu_backward(dout: np.ndarray, cache):
    return dout * (cache > 0)


def logistic(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def logistic_forward(z: np.ndarray):
    out = logistic(z)
    return out, out


def logistic_backward(dout: np.ndarray, cache):
    return dout * cache * (1.0 - cache)


def softplus_forward(z: np.ndarray):
    return np.logaddexp(0.0, z), z


def softplus_backward(dout: np.ndarray, cache):
    return dout * logistic(cache)


def linear_forward(x: np.ndarray, w: np.ndarray):
    """``x @ w.T`` for a head matrix of shape (outputs, inputs)."""

    return x @ w.T, (x, w)


def linear_backward(dout: np.ndarray, cache):
    x, w = cache
    return dout @ w, dout.T @ x
