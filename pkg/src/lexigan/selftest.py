"""Built-in verification: gradient checks, conv oracles, WAV round trip.

Everything here is independent of the production code paths it checks:
convolutions are compared against naive loop implementations, gradients
against central finite differences at f64. `run_selftest` returns one
(name, ok, detail) row per check; the CLI exits nonzero if any fails.

The `corrupt` argument flips on a deliberate backward-rule perturbation
(see autodiff.set_debug_backward_corruption) as a negative control that
proves broken gradients are actually detected.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import read_wav, write_wav
from .models import (LatentConfig, build_networks, critic_forward,
                     generator_forward, latent_config_for_preset)
from .rng import Rng

FD_EPS = 1e-5
REL_TOL = 1e-4


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-4)


def fd_gradcheck(loss_fn, tensors: list[Tensor], coords_per_tensor: int = 0,
                 seed: int = 0) -> float:
    """Max relative error between backward grads and central finite differences.

    `loss_fn()` must rebuild the loss from the live tensors. With
    coords_per_tensor > 0 only a seeded sample of coordinates per tensor is
    probed (needed to keep full-network checks inside their time budget).

    A coordinate that mismatches at the primary step is re-probed at a
    100x smaller one: piecewise-linear activations put kinks inside the
    difference window occasionally, and there the oracle, not the
    gradient, is invalid. A genuinely wrong backward rule mismatches at
    every step size, so the refinement cannot mask real defects.
    """

    def central(flat, i, eps):
        keep = flat[i]
        flat[i] = keep + eps
        with ad.no_grad():
            up = loss_fn().item()
        flat[i] = keep - eps
        with ad.no_grad():
            down = loss_fn().item()
        flat[i] = keep
        return (up - down) / (2 * eps)

    for t in tensors:
        t.zero_grad()
    loss = loss_fn()
    ad.backward(loss)
    grads = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, g in zip(tensors, grads):
        flat = t.data.reshape(-1)
        n = flat.shape[0]
        if coords_per_tensor and n > coords_per_tensor:
            idx = rng.choice(n, size=coords_per_tensor, replace=False)
        else:
            idx = np.arange(n)
        gflat = g.reshape(-1)
        for i in idx:
            a = float(gflat[i])
            err = rel_err(a, central(flat, i, FD_EPS))
            if err > REL_TOL:
                err = min(err, rel_err(a, central(flat, i, FD_EPS / 100)))
            worst = max(worst, err)
    return worst


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
                acc = 0.0
                for c in range(C):
                    for kk in range(K):
                        acc += xp[b, c, t * stride + kk] * k[f, c, kk]
                y[b, f, t] = acc
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


def _check_op_gradients() -> float:
    rng = np.random.default_rng(11)
    worst = 0.0

    x = Tensor(rng.standard_normal((3, 4)), requires_grad=True, dtype=np.float64)
    w = Tensor(rng.standard_normal((4, 5)), requires_grad=True, dtype=np.float64)
    b = Tensor(rng.standard_normal(5), requires_grad=True, dtype=np.float64)
    worst = max(worst, fd_gradcheck(
        lambda: ad.mean_all(ad.activation(ad.dense(x, w, b), "tanh")), [x, w, b]))

    xc = Tensor(rng.standard_normal((2, 3, 9)), requires_grad=True, dtype=np.float64)
    kc = Tensor(rng.standard_normal((4, 3, 3)), requires_grad=True, dtype=np.float64)
    worst = max(worst, fd_gradcheck(
        lambda: ad.mean_all(ad.activation(ad.conv1d(xc, kc, 2, (1, 1)), "sigmoid")), [xc, kc]))

    xt = Tensor(rng.standard_normal((2, 3, 5)), requires_grad=True, dtype=np.float64)
    kt = Tensor(rng.standard_normal((3, 2, 4)), requires_grad=True, dtype=np.float64)
    worst = max(worst, fd_gradcheck(
        lambda: ad.mean_all(ad.activation(ad.conv1d_transpose(xt, kt, 2, (1, 2)), "leaky_relu")),
        [xt, kt]))

    lg = Tensor(rng.standard_normal((4, 3)), requires_grad=True, dtype=np.float64)
    cls = np.array([0, 2, 1, 2])
    worst = max(worst, fd_gradcheck(lambda: ad.softmax_cross_entropy(lg, cls), [lg]))

    lg2 = Tensor(rng.standard_normal((4, 3)), requires_grad=True, dtype=np.float64)
    tg = (rng.random((4, 3)) < 0.5).astype(np.float64)
    worst = max(worst, fd_gradcheck(lambda: ad.sigmoid_cross_entropy(lg2, tg), [lg2]))

    xs = Tensor(rng.standard_normal((2, 3, 8)), requires_grad=True, dtype=np.float64)
    shifts = np.array([[1, -2, 0], [2, 1, -1]])
    worst = max(worst, fd_gradcheck(
        lambda: ad.mean_all(ad.phase_shuffle(xs, shifts)), [xs]))
    return worst


def _check_network_gradients(coords: int = 12) -> float:
    """D(G(z)) and Q(G(z)) compositions at desk size, f64, sampled coordinates."""
    cfg = latent_config_for_preset("fiw", 2, "desk")
    rng = Rng(314)
    gen, dis, q = build_networks(cfg, "desk", rng, dtype=np.float64, shuffle_radius=0)
    z = Tensor(rng.uniform(-1.0, 1.0, (2, cfg.total)))
    tensors = list(gen.tensors.values()) + list(dis.tensors.values())

    def dg_loss():
        return ad.mean_all(critic_forward(dis, generator_forward(gen, z), None))

    worst = fd_gradcheck(dg_loss, tensors, coords_per_tensor=coords, seed=7)

    tensors_q = list(gen.tensors.values()) + list(q.tensors.values())
    targets = np.array([[1.0, 0.0], [0.0, 1.0]])

    def qg_loss():
        logits = critic_forward(q, generator_forward(gen, z), None)
        return ad.sigmoid_cross_entropy(logits, targets)

    worst = max(worst, fd_gradcheck(qg_loss, tensors_q, coords_per_tensor=coords, seed=8))
    return worst


def _check_conv_oracles(cases: int = 50) -> float:
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(cases):
        B = int(rng.integers(1, 3))
        C = int(rng.integers(1, 4))
        F = int(rng.integers(1, 4))
        K = int(rng.integers(1, 5))
        L = int(rng.integers(K, K + 8))
        stride = int(rng.integers(1, 4))
        pad = (int(rng.integers(0, 3)), int(rng.integers(0, 3)))
        x = rng.standard_normal((B, C, L))
        k = rng.standard_normal((F, C, K))
        got = ad.conv1d(Tensor(x), Tensor(k), stride, pad).data
        want = naive_conv1d(x, k, stride, pad)
        worst = max(worst, float(np.abs(got - want).max()))
        kt = rng.standard_normal((C, F, K))
        full = (L - 1) * stride + K
        crop = (min(1, full - 1), 0)
        got_t = ad.conv1d_transpose(Tensor(x), Tensor(kt), stride, crop).data
        want_t = naive_conv1d_transpose(x, kt, stride, crop)
        worst = max(worst, float(np.abs(got_t - want_t).max()))
    return worst


def conv1d_adjoint(g: np.ndarray, k: np.ndarray, stride: int, pad, in_len: int) -> np.ndarray:
    """Adjoint of conv1d(., k, stride, pad): maps output-space g back to input space.

    A kernel k[F,C,K] reinterpreted as [in=F, out=C, K] feeds conv1d_transpose
    directly; the padded result is then cut back to the original length.
    """
    z = ad.conv1d_transpose(Tensor(g), Tensor(k), stride, (0, 0)).data
    B, C = z.shape[0], z.shape[1]
    buf = np.zeros((B, C, in_len + pad[0] + pad[1]), dtype=z.dtype)
    buf[:, :, :z.shape[2]] = z
    return buf[:, :, pad[0]:pad[0] + in_len]


def _check_adjointness(cases: int = 30) -> float:
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(cases):
        B = int(rng.integers(1, 3))
        C = int(rng.integers(1, 4))
        F = int(rng.integers(1, 4))
        K = int(rng.integers(1, 5))
        L = int(rng.integers(K, K + 8))
        stride = int(rng.integers(1, 4))
        pad = (int(rng.integers(0, 2)), int(rng.integers(0, 2)))
        x = rng.standard_normal((B, C, L))
        k = rng.standard_normal((F, C, K))
        y = ad.conv1d(Tensor(x), Tensor(k), stride, pad).data
        g = rng.standard_normal(y.shape)
        lhs = float((y * g).sum())
        rhs = float((conv1d_adjoint(g, k, stride, pad, L) * x).sum())
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1.0))
    return worst


def _check_wav_roundtrip() -> bool:
    ints = np.concatenate([np.arange(-2000, 2000, 7), [32767, -32767, 0, 1, -1]])
    samples = np.clip(ints / 32767.0, -1, 1).astype(np.float32)
    with tempfile.TemporaryDirectory() as d:
        p1 = os.path.join(d, "a.wav")
        p2 = os.path.join(d, "b.wav")
        write_wav(samples, p1)
        clip = read_wav(p1)
        write_wav(clip, p2)
        with open(p1, "rb") as f:
            b1 = f.read()
        with open(p2, "rb") as f:
            b2 = f.read()
    return b1 == b2


def run_selftest(corrupt: str | None = None):
    """Run all checks; returns (all_ok, [(name, ok, detail), ...])."""
    ad.set_debug_backward_corruption(corrupt)
    try:
        results = []
        err = _check_op_gradients()
        results.append(("autodiff-core/op-gradients", err <= REL_TOL, f"max rel err {err:.3e}"))
        err = _check_network_gradients()
        results.append(("autodiff-core/network-gradients", err <= REL_TOL,
                        f"max rel err {err:.3e}"))
        err = _check_conv_oracles()
        results.append(("autodiff-core/conv-oracles", err <= 1e-12, f"max abs err {err:.3e}"))
        err = _check_adjointness()
        results.append(("autodiff-core/adjointness", err <= 1e-10, f"max rel err {err:.3e}"))
        ok = _check_wav_roundtrip()
        results.append(("corpus/wav-round-trip", ok, "byte-identical" if ok else "mismatch"))
    finally:
        ad.set_debug_backward_corruption(None)
    return all(ok for _, ok, _ in results), results
