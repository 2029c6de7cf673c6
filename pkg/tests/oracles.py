"""Independent reference implementations used as test oracles.

Everything here is deliberately naive (plain loops, direct formulas) and
shares no code with the library paths it checks.
"""

import numpy as np


def naive_dense(x, w, b):
    B, I = x.shape
    _, O = w.shape
    y = np.zeros((B, O))
    for bb in range(B):
        for o in range(O):
            acc = b[o]
            for i in range(I):
                acc += x[bb, i] * w[i, o]
            y[bb, o] = acc
    return y


def naive_conv1d(x, k, stride=1, padding=(0, 0)):
    B, C, L = x.shape
    F, _, K = k.shape
    pl, pr = padding
    xp = np.zeros((B, C, L + pl + pr))
    xp[:, :, pl:pl + L] = x
    T = (xp.shape[2] - K) // stride + 1
    y = np.zeros((B, F, T))
    for b in range(B):
        for f in range(F):
            for t in range(T):
                for c in range(C):
                    for kk in range(K):
                        y[b, f, t] += xp[b, c, t * stride + kk] * k[f, c, kk]
    return y


def naive_conv1d_transpose(x, k, stride=1, crop=(0, 0)):
    B, C, L = x.shape
    _, F, K = k.shape
    full = (L - 1) * stride + K
    z = np.zeros((B, F, full))
    for b in range(B):
        for c in range(C):
            for t in range(L):
                for f in range(F):
                    for kk in range(K):
                        z[b, f, t * stride + kk] += x[b, c, t] * k[c, f, kk]
    cl, cr = crop
    return z[:, :, cl:full - cr]


def naive_phase_shift(row, k):
    """Shift one row by k with reflection at the exposed edge."""
    L = row.shape[0]
    out = np.empty_like(row)
    for i in range(L):
        j = i - k
        if j < 0:
            j = -j
        elif j >= L:
            j = 2 * L - 2 - j
        out[i] = row[j]
    return out


def central_difference(f, x, eps=1e-5):
    """Gradient of scalar f at 1-d point x by central differences."""
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        keep = x[i]
        x[i] = keep + eps
        up = f(x)
        x[i] = keep - eps
        down = f(x)
        x[i] = keep
        g[i] = (up - down) / (2 * eps)
    return g


def logsumexp(v):
    m = max(v)
    return m + np.log(sum(np.exp(x - m) for x in v))
