"""Reverse-mode automatic differentiation over dense numpy tensors.

The op set is exactly what the three audio networks need: a dense
projection, strided 1-D convolution and its transpose, elementwise
activations, the two cross-entropies, phase shuffling, and a few
arithmetic/reduction helpers. Each op that touches a grad-requiring
input records a backward closure; `backward(loss)` replays the recorded
graph in reverse topological order and accumulates gradients additively
(callers zero grads between optimizer steps).

Convolutions run as im2col matmuls so the heavy lifting stays inside
BLAS; correctness against naive loop oracles is enforced by the test
suite and the self-test command.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._kernels import overlap_add, shuffle_gather, shuffle_scatter
from .errors import ShapeError, UsageError, ValidationError

_grad_enabled = True

# Self-test negative control: names an op whose backward rule is
# deliberately perturbed so broken gradients are provably detected.
_debug_corrupt_backward: str | None = None


def set_debug_backward_corruption(op_name: str | None) -> None:
    global _debug_corrupt_backward
    _debug_corrupt_backward = op_name


class no_grad:
    """Context manager that suppresses tape recording (inference paths)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """N-d array with an optional gradient buffer and backward rule."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # operator sugar used by the loss code
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __rmul__(self, other):
        return mul(self, other)


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _make(data, parents, backward_fn, dtype=None) -> Tensor:
    out = Tensor(data, dtype=dtype)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype)  # own copy: g may be shared
    else:
        t.grad += g


class Tape:
    """Topologically ordered list of graph nodes reachable from a root.

    Every node's parents precede it, so one reverse sweep visits each
    recorded operation exactly once.
    """

    def __init__(self, root: Tensor):
        nodes = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                nodes.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.nodes = nodes


def backward(loss: Tensor) -> None:
    """Populate .grad on every grad-requiring tensor reachable from `loss`."""
    if loss.data.size != 1:
        raise UsageError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    tape = Tape(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# arithmetic / reductions


def add(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    if a.data.shape != b.data.shape and b.data.size != 1 and a.data.size != 1:
        raise ShapeError(f"add: shapes {a.data.shape} vs {b.data.shape}")
    out_data = a.data + b.data

    def bwd(g):
        _accum(a, g if a.data.shape == out_data.shape else np.sum(g))
        _accum(b, g if b.data.shape == out_data.shape else np.sum(g))

    return _make(out_data, (a, b), bwd)


def sub(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    if a.data.shape != b.data.shape and b.data.size != 1 and a.data.size != 1:
        raise ShapeError(f"sub: shapes {a.data.shape} vs {b.data.shape}")
    out_data = a.data - b.data

    def bwd(g):
        _accum(a, g if a.data.shape == out_data.shape else np.sum(g))
        _accum(b, -g if b.data.shape == out_data.shape else -np.sum(g))

    return _make(out_data, (a, b), bwd)


def mul(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    if a.data.shape != b.data.shape and b.data.size != 1 and a.data.size != 1:
        raise ShapeError(f"mul: shapes {a.data.shape} vs {b.data.shape}")
    out_data = a.data * b.data

    def bwd(g):
        ga = g * b.data
        gb = g * a.data
        _accum(a, ga if a.data.shape == out_data.shape else np.sum(ga))
        _accum(b, gb if b.data.shape == out_data.shape else np.sum(gb))

    return _make(out_data, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, -g)

    return _make(-a.data, (a,), bwd)


def sum_all(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, np.full_like(a.data, float(g)))

    return _make(np.sum(a.data), (a,), bwd)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def bwd(g):
        _accum(a, np.full_like(a.data, float(g) / n))

    return _make(np.mean(a.data), (a,), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def bwd(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), bwd)


def mean_rows(a: Tensor, lo: int, hi: int) -> Tensor:
    """Mean of a 1-d tensor over the index range [lo, hi)."""
    if a.data.ndim != 1:
        raise ShapeError(f"mean_rows: need a 1-d tensor, got {a.data.shape}")
    if not (0 <= lo < hi <= a.data.shape[0]):
        raise ValidationError(f"mean_rows: bad range [{lo},{hi}) for length {a.data.shape[0]}")
    n = hi - lo

    def bwd(g):
        full = np.zeros_like(a.data)
        full[lo:hi] = float(g) / n
        _accum(a, full)

    return _make(np.mean(a.data[lo:hi]), (a,), bwd)


# ---------------------------------------------------------------------------
# network ops


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y[b,o] = sum_i x[b,i] w[i,o] + b[o]."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise ShapeError(f"dense: x must be 2-d and w 2-d, got {x.data.shape}, {w.data.shape}")
    if x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(
            f"dense: x inner axis {x.data.shape[1]} != w rows {w.data.shape[0]}"
        )
    if b.data.shape != (w.data.shape[1],):
        raise ShapeError(f"dense: bias shape {b.data.shape} != (out={w.data.shape[1]},)")
    out_data = x.data @ w.data + b.data

    def bwd(g):
        gw = x.data.T @ g
        if _debug_corrupt_backward == "dense":
            gw = gw * 1.5 + 0.1
        _accum(x, g @ w.data.T)
        _accum(w, gw)
        _accum(b, g.sum(axis=0))

    return _make(out_data, (x, w, b), bwd)


def same_pad(length: int, kernel: int, stride: int) -> tuple[int, int]:
    """Zero padding that makes a strided conv emit ceil(L/stride) frames."""
    out = -(-length // stride)
    total = max((out - 1) * stride + kernel - length, 0)
    return total // 2, total - total // 2


def conv1d(x: Tensor, k: Tensor, stride: int = 1, padding=(0, 0)) -> Tensor:
    """Strided cross-correlation: x[B,C,L], k[F,C,K] -> [B,F,T]."""
    if x.data.ndim != 3 or k.data.ndim != 3:
        raise ShapeError(f"conv1d: need x[B,C,L], k[F,C,K], got {x.data.shape}, {k.data.shape}")
    B, C, L = x.data.shape
    F, Ck, K = k.data.shape
    if Ck != C:
        raise ShapeError(f"conv1d: channel axis mismatch, x has {C}, kernel expects {Ck}")
    if stride < 1:
        raise ValidationError(f"conv1d: stride must be >= 1, got {stride}")
    pl, pr = padding
    Lp = L + pl + pr
    if K > Lp:
        raise ShapeError(f"conv1d: kernel {K} longer than padded input {Lp}")
    if pl or pr:
        xp = np.zeros((B, C, Lp), dtype=x.data.dtype)
        xp[:, :, pl:pl + L] = x.data
    else:
        xp = x.data
    T = (Lp - K) // stride + 1
    cols = sliding_window_view(xp, K, axis=2)[:, :, ::stride, :]  # [B,C,T,K]
    colsM = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(B * T, C * K)
    kM = k.data.reshape(F, C * K)
    out_data = (colsM @ kM.T).reshape(B, T, F).transpose(0, 2, 1)

    def bwd(g):
        gM = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(B * T, F)
        if k.requires_grad:
            gk = (gM.T @ colsM).reshape(F, C, K)
            if _debug_corrupt_backward == "conv1d":
                gk = gk + 0.05
            _accum(k, gk)
        if x.requires_grad:
            tmp = (gM @ kM).reshape(B, T, C, K)
            dxp = overlap_add(tmp, stride, (T - 1) * stride + K)
            if dxp.shape[2] != Lp:  # stride leftover beyond the last window
                full = np.zeros((B, C, Lp), dtype=dxp.dtype)
                full[:, :, :dxp.shape[2]] = dxp
                dxp = full
            _accum(x, dxp[:, :, pl:pl + L])

    return _make(out_data, (x, k), bwd)


def conv1d_transpose(x: Tensor, k: Tensor, stride: int = 1, crop=(0, 0)) -> Tensor:
    """Scatter-add of stride-spaced kernel copies: x[B,C,L], k[C,F,K] -> [B,F,out].

    Uncropped output length is (L-1)*stride + K; `crop` trims (left, right)
    to invert a matching conv1d padding. Adjoint of conv1d by construction.
    """
    if x.data.ndim != 3 or k.data.ndim != 3:
        raise ShapeError(
            f"conv1d_transpose: need x[B,C,L], k[C,F,K], got {x.data.shape}, {k.data.shape}"
        )
    B, C, L = x.data.shape
    Ck, F, K = k.data.shape
    if Ck != C:
        raise ShapeError(f"conv1d_transpose: channel axis mismatch, x has {C}, kernel expects {Ck}")
    if stride < 1:
        raise ValidationError(f"conv1d_transpose: stride must be >= 1, got {stride}")
    cl, cr = crop
    full = (L - 1) * stride + K
    out_len = full - cl - cr
    if out_len < 1:
        raise ShapeError(f"conv1d_transpose: crop {crop} consumes the whole output ({full})")
    xM = np.ascontiguousarray(x.data.transpose(0, 2, 1)).reshape(B * L, C)
    kM = k.data.reshape(C, F * K)
    tmp = (xM @ kM).reshape(B, L, F, K)
    z = overlap_add(tmp, stride, full)
    out_data = np.ascontiguousarray(z[:, :, cl: full - cr])

    def bwd(g):
        gz = np.zeros((B, F, full), dtype=g.dtype)
        gz[:, :, cl : full - cr] = g
        cols = sliding_window_view(gz, K, axis=2)[:, :, ::stride, :]  # [B,F,L,K]
        colsM = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(B * L, F * K)
        if x.requires_grad:
            kR = k.data.reshape(C, F * K)
            _accum(x, (colsM @ kR.T).reshape(B, L, C).transpose(0, 2, 1))
        if k.requires_grad:
            _accum(k, (xM.T @ colsM).reshape(C, F, K))

    return _make(out_data, (x, k), bwd)


def add_channel_bias(x: Tensor, b: Tensor) -> Tensor:
    """x[B,C,L] + b[C] broadcast over batch and length."""
    B, C, L = x.data.shape
    if b.data.shape != (C,):
        raise ShapeError(f"add_channel_bias: bias shape {b.data.shape} != ({C},)")
    out_data = x.data + b.data[None, :, None]

    def bwd(g):
        _accum(x, g)
        _accum(b, g.sum(axis=(0, 2)))

    return _make(out_data, (x, b), bwd)


ACTIVATIONS = ("relu", "leaky_relu", "tanh", "sigmoid")
LEAKY_SLOPE = 0.2


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        mask = (x.data > 0).astype(x.data.dtype)
        out_data = x.data * mask

        def bwd(g):
            _accum(x, g * mask)

    elif kind == "leaky_relu":
        mask = np.where(x.data > 0, x.data.dtype.type(1), x.data.dtype.type(LEAKY_SLOPE))
        out_data = x.data * mask

        def bwd(g):
            _accum(x, g * mask)

    elif kind == "tanh":
        t = np.tanh(x.data)
        out_data = t

        def bwd(g):
            _accum(x, g * (1 - t * t))

    elif kind == "sigmoid":
        s = _sigmoid(x.data)
        out_data = s

        def bwd(g):
            _accum(x, g * s * (1 - s))

    else:
        raise ValidationError(f"unknown activation kind {kind!r}, expected one of {ACTIVATIONS}")
    return _make(out_data, (x,), bwd)


def activation_slope(x_data: np.ndarray, kind: str) -> np.ndarray:
    """Pointwise derivative of an activation, as a plain array."""
    if kind == "relu":
        return (x_data > 0).astype(x_data.dtype)
    if kind == "leaky_relu":
        return np.where(x_data > 0, x_data.dtype.type(1), x_data.dtype.type(LEAKY_SLOPE))
    if kind == "tanh":
        t = np.tanh(x_data)
        return 1 - t * t
    if kind == "sigmoid":
        s = _sigmoid(x_data)
        return s * (1 - s)
    raise ValidationError(f"unknown activation kind {kind!r}")


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softmax_cross_entropy(logits: Tensor, target_class) -> Tensor:
    """Mean over the batch of -log softmax(logits)[target], max-stabilized."""
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: logits must be [B,K], got {logits.data.shape}")
    B, K = logits.data.shape
    cls = np.asarray(target_class, dtype=np.int64).reshape(-1)
    if cls.shape[0] != B:
        raise ShapeError(f"softmax_cross_entropy: {cls.shape[0]} targets for batch {B}")
    if cls.min(initial=0) < 0 or cls.max(initial=0) >= K:
        raise ValidationError(f"softmax_cross_entropy: class index out of range [0,{K})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    out_data = -np.mean(logp[np.arange(B), cls])

    def bwd(g):
        p = np.exp(logp)
        p[np.arange(B), cls] -= 1.0
        _accum(logits, (float(g) / B) * p)

    return _make(out_data, (logits,), bwd)


def sigmoid_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean over all elements of the stabilized binary cross-entropy."""
    t = np.asarray(targets, dtype=logits.data.dtype)
    if t.shape != logits.data.shape:
        raise ShapeError(
            f"sigmoid_cross_entropy: targets {t.shape} != logits {logits.data.shape}"
        )
    if not np.all((t == 0) | (t == 1)):
        raise ValidationError("sigmoid_cross_entropy: targets must be binary {0,1}")
    l = logits.data
    # softplus(l) - l*t, with softplus(l) = max(l,0) + log1p(exp(-|l|))
    per = np.maximum(l, 0) - l * t + np.log1p(np.exp(-np.abs(l)))
    out_data = np.mean(per)
    n = l.size

    def bwd(g):
        _accum(logits, (float(g) / n) * (_sigmoid(l) - t))

    return _make(out_data, (logits,), bwd)


def phase_shuffle(x: Tensor, shifts: np.ndarray) -> Tensor:
    """Shift each (batch, channel) row by its own offset, reflecting at edges.

    `shifts` is an integer array of shape [B,C]; positive values delay the
    row. The exposed edge is filled by reflection about the boundary sample,
    so length is preserved. |shift| must be < L.
    """
    B, C, L = x.data.shape
    shifts = np.asarray(shifts, dtype=np.int64)
    if shifts.shape != (B, C):
        raise ShapeError(f"phase_shuffle: shifts shape {shifts.shape} != ({B},{C})")
    if np.abs(shifts).max(initial=0) >= L:
        raise ValidationError(f"phase_shuffle: |shift| must be < length {L}")
    out_data = shuffle_gather(x.data, shifts)

    def bwd(g):
        if not x.requires_grad:
            return
        _accum(x, shuffle_scatter(np.ascontiguousarray(g), shifts))

    return _make(out_data, (x,), bwd)


def zero_grads(tensors) -> None:
    for t in tensors:
        t.zero_grad()


class freeze:
    """Temporarily drop requires_grad on a set of tensors.

    Used when a forward pass only needs gradients with respect to its
    input (the gradient-penalty probe) so parameter gradients are not
    computed or recorded.
    """

    def __init__(self, tensors):
        self._tensors = list(tensors)

    def __enter__(self):
        self._saved = [t.requires_grad for t in self._tensors]
        for t in self._tensors:
            t.requires_grad = False
        return self

    def __exit__(self, *exc):
        for t, rg in zip(self._tensors, self._saved):
            t.requires_grad = rg
        return False
