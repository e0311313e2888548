"""Hot loops for convolution: im2col / col2im.

Two interchangeable backends live here. The numba path compiles explicit
loops with ``@njit``; the numpy path uses strided views and k*k slice-adds.
Set ``PDPGAZE_DISABLE_NUMBA=1`` before import to force the numpy path (also
used automatically when numba is not importable).
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get("PDPGAZE_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


def conv_out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------

def im2col_numpy(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """(N, C, H, W) -> (N, C*k*k, Ho*Wo), channel-major then kernel row/col."""
    n, c, h, w = x.shape
    ho = conv_out_size(h, k, stride, pad)
    wo = conv_out_size(w, k, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    # win: (N, C, Ho, Wo, k, k)
    return np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(n, c * k * k, ho * wo)


def col2im_numpy(cols: np.ndarray, shape: tuple, k: int, stride: int, pad: int) -> np.ndarray:
    """Adjoint of :func:`im2col_numpy`: scatter-add columns back onto (N, C, H, W)."""
    n, c, h, w = shape
    ho = conv_out_size(h, k, stride, pad)
    wo = conv_out_size(w, k, stride, pad)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    cols = cols.reshape(n, c, k, k, ho, wo)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, i, j]
    if pad:
        out = out[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(out)


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @njit(cache=True)
    def _im2col_loops(x, k, stride, pad, ho, wo):
        n, c, h, w = x.shape
        cols = np.zeros((n, c * k * k, ho * wo))
        for b in range(n):
            for ch in range(c):
                for i in range(k):
                    for j in range(k):
                        row = (ch * k + i) * k + j
                        for oy in range(ho):
                            y = oy * stride + i - pad
                            if y < 0 or y >= h:
                                continue
                            for ox in range(wo):
                                xx = ox * stride + j - pad
                                if xx < 0 or xx >= w:
                                    continue
                                cols[b, row, oy * wo + ox] = x[b, ch, y, xx]
        return cols

    @njit(cache=True)
    def _col2im_loops(cols, n, c, h, w, k, stride, pad, ho, wo):
        out = np.zeros((n, c, h, w))
        for b in range(n):
            for ch in range(c):
                for i in range(k):
                    for j in range(k):
                        row = (ch * k + i) * k + j
                        for oy in range(ho):
                            y = oy * stride + i - pad
                            if y < 0 or y >= h:
                                continue
                            for ox in range(wo):
                                xx = ox * stride + j - pad
                                if xx < 0 or xx >= w:
                                    continue
                                out[b, ch, y, xx] += cols[b, row, oy * wo + ox]
        return out

    def im2col_numba(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
        ho = conv_out_size(x.shape[2], k, stride, pad)
        wo = conv_out_size(x.shape[3], k, stride, pad)
        return _im2col_loops(np.ascontiguousarray(x, dtype=np.float64), k, stride, pad, ho, wo)

    def col2im_numba(cols: np.ndarray, shape: tuple, k: int, stride: int, pad: int) -> np.ndarray:
        n, c, h, w = shape
        ho = conv_out_size(h, k, stride, pad)
        wo = conv_out_size(w, k, stride, pad)
        return _col2im_loops(np.ascontiguousarray(cols, dtype=np.float64), n, c, h, w, k, stride, pad, ho, wo)

else:  # pragma: no cover
    im2col_numba = im2col_numpy
    col2im_numba = col2im_numpy


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    if USE_NUMBA:
        return im2col_numba(x, k, stride, pad)
    return im2col_numpy(x, k, stride, pad)


def col2im(cols: np.ndarray, shape: tuple, k: int, stride: int, pad: int) -> np.ndarray:
    if USE_NUMBA:
        return col2im_numba(cols, shape, k, stride, pad)
    return col2im_numpy(cols, shape, k, stride, pad)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
