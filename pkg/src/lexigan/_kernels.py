"""Hot inner loops with scatter/gather access patterns.

These two kernels are the only places where vectorized numpy loses badly
to plain loops (strided overlap-add and reflected gather). When numba is
available they are jitted; the numpy fallbacks compute identical values,
so either path satisfies the same oracle tests.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def _overlap_add_jit(tmp, stride, out):
    B, T, C, K = tmp.shape
    for b in range(B):
        for t in range(T):
            base = t * stride
            for c in range(C):
                for kk in range(K):
                    out[b, c, base + kk] += tmp[b, t, c, kk]


def _overlap_add_np(tmp, stride, out):
    B, T, C, K = tmp.shape
    tmpK = np.ascontiguousarray(tmp.transpose(3, 0, 2, 1))  # [K,B,C,T]
    for kk in range(K):
        out[:, :, kk:kk + stride * T:stride] += tmpK[kk]


def overlap_add(tmp: np.ndarray, stride: int, out_len: int) -> np.ndarray:
    """Scatter-add stride-spaced windows: tmp[b,t,c,kk] -> out[b,c,t*stride+kk]."""
    B, T, C, K = tmp.shape
    out = np.zeros((B, C, out_len), dtype=tmp.dtype)
    if HAVE_NUMBA:
        _overlap_add_jit(np.ascontiguousarray(tmp), stride, out)
    else:
        _overlap_add_np(tmp, stride, out)
    return out


@njit(cache=True)
def _shuffle_gather_jit(x, shifts, out):
    B, C, L = x.shape
    for b in range(B):
        for c in range(C):
            k = shifts[b, c]
            for i in range(L):
                j = i - k
                if j < 0:
                    j = -j
                elif j >= L:
                    j = 2 * L - 2 - j
                out[b, c, i] = x[b, c, j]


@njit(cache=True)
def _shuffle_scatter_jit(g, shifts, out):
    B, C, L = g.shape
    for b in range(B):
        for c in range(C):
            k = shifts[b, c]
            for i in range(L):
                j = i - k
                if j < 0:
                    j = -j
                elif j >= L:
                    j = 2 * L - 2 - j
                out[b, c, j] += g[b, c, i]


def _reflect_indices(shifts: np.ndarray, L: int) -> np.ndarray:
    idx = np.arange(L)[None, None, :] - shifts[:, :, None]
    idx = np.abs(idx)
    return np.where(idx >= L, 2 * L - 2 - idx, idx)


def shuffle_gather(x: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """Per-(batch, channel) shift with reflection at the exposed edge."""
    if HAVE_NUMBA:
        out = np.empty_like(x)
        _shuffle_gather_jit(x, shifts, out)
        return out
    return np.take_along_axis(x, _reflect_indices(shifts, x.shape[2]), axis=2)


def shuffle_scatter(g: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """Adjoint of shuffle_gather: accumulate g back through the index map."""
    out = np.zeros_like(g)
    if HAVE_NUMBA:
        _shuffle_scatter_jit(g, shifts, out)
        return out
    B, C, L = g.shape
    idx = _reflect_indices(shifts, L)
    bb, cc = np.meshgrid(np.arange(B), np.arange(C), indexing="ij")
    np.add.at(out, (bb[:, :, None], cc[:, :, None], idx), g)
    return out
