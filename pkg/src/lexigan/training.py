"""Adversarial + information-loss training loop and checkpointing.

One training cycle is: several critic updates (Adam), one adversarial
generator update (Adam), then one joint update in which the code
cross-entropy drives both the generator (Adam, gradient scaled by
lambda_info) and the retrieval network (RMSProp).

The critic maximizes  mean(D(real)) - mean(D(fake))  and pays a penalty
lambda_gp * mean((||grad_x D(x_interp)|| - 1)^2)  on per-item uniform
interpolates between real and fake batches. The penalty's parameter
gradient is produced by a taped directional-derivative pass (see
`gradient_penalty`), avoiding general higher-order autodiff.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import CheckpointError, TrainingFault, ValidationError
from .models import (ARCH_CIW, LatentConfig, NetworkParams, build_networks,
                     class_of_code, critic_forward, critic_jvp,
                     draw_shuffle_shifts, generate, generator_forward,
                     latent_config_for_preset, sample_latent)
from .optim import Adam, RMSProp
from .rng import Rng


@dataclass
class TrainConfig:
    arch: LatentConfig
    total_steps: int
    seed: int
    preset: str = "desk"
    lambda_gp: float = 10.0
    lambda_info: float = 1.0
    batch: int = 64
    d_updates_per_cycle: int = 5
    lr: float = 1e-4
    shuffle_radius: int = 2

    def __post_init__(self):
        if self.lambda_gp < 0:
            raise ValidationError("lambda_gp must be >= 0")
        if self.batch < 2:
            raise ValidationError("batch must be >= 2 (interpolation needs pairs)")
        if self.d_updates_per_cycle < 1:
            raise ValidationError("d_updates_per_cycle must be >= 1")


@dataclass
class LossReport:
    v_wgan: float
    gp_term: float
    d_loss: float
    g_loss: float
    info_loss: float
    step: int


LOSS_CSV_HEADER = "step,v_wgan,gp,d_loss,g_loss,info_loss"


def loss_csv_row(r: LossReport) -> str:
    return ",".join([str(r.step), repr(r.v_wgan), repr(r.gp_term), repr(r.d_loss),
                     repr(r.g_loss), repr(r.info_loss)])


class WaveCritic:
    """Binds a critic network to one batch's shuffle offsets for the penalty."""

    def __init__(self, d: NetworkParams, shifts):
        self.d = d
        self.shifts = shifts

    def param_tensors(self):
        return self.d.tensors.values()

    def trace_forward(self, x: Tensor):
        return critic_forward(self.d, x, self.shifts, want_trace=True)

    def jvp(self, trace, direction: np.ndarray) -> Tensor:
        return critic_jvp(self.d, trace, direction)


def gradient_penalty(critic, real: np.ndarray, fake: np.ndarray, rng: Rng):
    """Penalty value and a taped node carrying its parameter gradient.

    Interpolates x = eps*real + (1-eps)*fake with per-item eps ~ U(0,1),
    computes g = grad_x D(x) with parameters frozen, then rebuilds the
    directional derivative D'(x; g) on the tape. Because

        d/dtheta (||g|| - 1)^2  =  [2(||g||-1)/||g||] * d/dtheta <g_const, grad_x D>,

    backpropagating through the weighted directional derivative yields the
    exact penalty gradient (almost everywhere). The returned node's VALUE
    is a proxy, not the penalty itself; use the returned float for reports.
    """
    if real.shape != fake.shape:
        raise ValidationError(f"gradient_penalty: real {real.shape} vs fake {fake.shape}")
    B = real.shape[0]
    eps = rng.uniform(0.0, 1.0, (B, 1))
    xhat = (eps * real + (1.0 - eps) * fake).astype(real.dtype)
    params = list(critic.param_tensors())
    x_t = Tensor(xhat, requires_grad=True)
    with ad.freeze(params):
        score, trace = critic.trace_forward(x_t)
        ad.backward(ad.sum_all(score))
    g = x_t.grad
    norms = np.sqrt((g.astype(np.float64) ** 2).sum(axis=1))
    gp_value = float(np.mean((norms - 1.0) ** 2))
    coeff = np.where(norms > 1e-12, 2.0 * (norms - 1.0) / np.maximum(norms, 1e-12), 0.0) / B
    tangent = critic.jvp(trace, g)
    grad_node = ad.sum_all(ad.mul(tangent, Tensor(coeff.astype(tangent.data.dtype))))
    return gp_value, grad_node


def wgan_d_loss(d: NetworkParams, real: np.ndarray, fake: np.ndarray, rng: Rng,
                lambda_gp: float = 10.0):
    """Critic loss pieces for one update: floats for the report, node for backward."""
    if real.shape != fake.shape:
        raise ValidationError(f"wgan_d_loss: real {real.shape} vs fake {fake.shape}")
    B = real.shape[0]
    shifts_rf = shifts_i = None
    if d.shuffle_radius > 0:
        shifts_rf = draw_shuffle_shifts(d, 2 * B, rng)
        shifts_i = draw_shuffle_shifts(d, B, rng)
    # real and fake share one batched pass; rows stay independent
    scores = critic_forward(d, Tensor(np.concatenate([real, fake], axis=0)), shifts_rf)
    v_node = ad.sub(ad.mean_rows(scores, 0, B), ad.mean_rows(scores, B, 2 * B))
    v_wgan = float(v_node.data)
    if lambda_gp != 0.0:
        gp_value, gp_node = gradient_penalty(WaveCritic(d, shifts_i), real, fake, rng)
        total = ad.add(ad.neg(v_node), ad.mul(gp_node, lambda_gp))
    else:
        gp_value = 0.0
        total = ad.neg(v_node)
    d_loss = -v_wgan + lambda_gp * gp_value
    return {"v_wgan": v_wgan, "gp_term": gp_value, "d_loss": d_loss}, total


def info_loss(q: NetworkParams, cfg: LatentConfig, fake: Tensor, true_codes: np.ndarray,
              rng: Rng | None = None) -> Tensor:
    """Code-retrieval cross-entropy: softmax over classes (ciw), per-bit sigmoid (fiw).

    During training an rng enables the trunk's phase shuffle; probe-time
    evaluation omits it and is deterministic.
    """
    if q.cfg.arch != cfg.arch or q.out_dim != cfg.num_code:
        raise ValidationError(
            f"info_loss: qnet head ({q.cfg.arch},{q.out_dim}) does not match "
            f"latent config ({cfg.arch},{cfg.num_code})"
        )
    shifts = None
    if rng is not None and q.shuffle_radius > 0:
        shifts = draw_shuffle_shifts(q, fake.data.shape[0], rng)
    logits = critic_forward(q, fake, shifts)
    if cfg.arch == ARCH_CIW:
        return ad.softmax_cross_entropy(logits, np.argmax(true_codes, axis=1))
    return ad.sigmoid_cross_entropy(logits, (true_codes > 0.5).astype(logits.data.dtype))


@dataclass
class TrainState:
    cfg: TrainConfig
    gen: NetworkParams
    dis: NetworkParams
    q: NetworkParams
    opt_g: Adam
    opt_d: Adam
    opt_q: RMSProp
    rng: Rng
    data: np.ndarray | None = None  # [N, slot_len] float32
    step: int = 0
    _perm: np.ndarray | None = field(default=None, repr=False)
    _pos: int = 0


def init_state(cfg: TrainConfig, data: np.ndarray | None) -> TrainState:
    rng = Rng(cfg.seed)
    gen, dis, q = build_networks(cfg.arch, cfg.preset, rng,
                                 dtype=np.float32, shuffle_radius=cfg.shuffle_radius)
    if data is not None:
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 2 or data.shape[1] != gen.slot_len:
            raise ValidationError(
                f"training data must be [N,{gen.slot_len}], got {data.shape}"
            )
        if data.shape[0] < cfg.batch:
            raise ValidationError(
                f"corpus has {data.shape[0]} clips, fewer than batch {cfg.batch}"
            )
    return TrainState(cfg=cfg, gen=gen, dis=dis, q=q,
                      opt_g=Adam(gen.tensors, lr=cfg.lr),
                      opt_d=Adam(dis.tensors, lr=cfg.lr),
                      opt_q=RMSProp(q.tensors, lr=cfg.lr),
                      rng=rng, data=data)


def _next_batch(state: TrainState) -> np.ndarray:
    n = state.data.shape[0]
    b = state.cfg.batch
    if state._perm is None or state._pos + b > n:
        state._perm = state.rng.permutation(n)  # new epoch
        state._pos = 0
    idx = state._perm[state._pos:state._pos + b]
    state._pos += b
    return state.data[idx]


def _require_finite(values: dict, step: int) -> None:
    for name, v in values.items():
        if not np.isfinite(v):
            raise TrainingFault(f"non-finite {name} ({v}) at step {step}", step=step)


def train_cycle(state: TrainState) -> LossReport:
    """One full schedule cycle; returns the losses of its last critic update."""
    if state.data is None:
        raise ValidationError("train_cycle: state has no training data attached")
    cfg = state.cfg
    lat = cfg.arch
    rng = state.rng
    frag = None
    for _ in range(cfg.d_updates_per_cycle):
        real = _next_batch(state)
        lv = sample_latent(lat, rng, cfg.batch)
        with ad.no_grad():
            fake = generate(state.gen, lv).data
        ad.zero_grads(state.dis.tensors.values())
        frag, total = wgan_d_loss(state.dis, real, fake, rng, cfg.lambda_gp)
        _require_finite(frag, state.step)
        ad.backward(total)
        state.opt_d.step()

    # adversarial generator update on a fresh batch of latents
    lv = sample_latent(lat, rng, cfg.batch)
    z = Tensor(lv.matrix().astype(np.float32))
    fake_t = generator_forward(state.gen, z)
    shifts = draw_shuffle_shifts(state.dis, cfg.batch, rng) if state.dis.shuffle_radius > 0 else None
    ad.zero_grads(state.gen.tensors.values())
    with ad.freeze(state.dis.tensors.values()):
        g_loss_node = ad.neg(ad.mean_all(critic_forward(state.dis, fake_t, shifts)))
        _require_finite({"g_loss": float(g_loss_node.data)}, state.step)
        ad.backward(g_loss_node)
    state.opt_g.step()

    # joint info update: generator takes lambda_info-scaled gradients,
    # the retrieval network trains on the unscaled cross-entropy
    lv = sample_latent(lat, rng, cfg.batch)
    z = Tensor(lv.matrix().astype(np.float32))
    fake_t = generator_forward(state.gen, z)
    ce = info_loss(state.q, lat, fake_t, lv.code, rng)
    _require_finite({"info_loss": float(ce.data)}, state.step)
    ad.zero_grads(state.gen.tensors.values())
    ad.zero_grads(state.q.tensors.values())
    ad.backward(ce)
    state.opt_g.step(grad_scale=cfg.lambda_info)
    state.opt_q.step()

    state.step += 1
    return LossReport(v_wgan=frag["v_wgan"], gp_term=frag["gp_term"], d_loss=frag["d_loss"],
                      g_loss=float(g_loss_node.data), info_loss=float(ce.data),
                      step=state.step)


# ---------------------------------------------------------------------------
# checkpoint format
#
# little-endian:  "FWGN" | u32 version=1 | u64 step
#   | u32 config_len | config bytes (canonical key=value lines, sorted)
#   | u32 tensor_count | per tensor: u16 name_len, name, u8 dtype(0=f32,1=f64),
#     u8 rank, u32 dims[rank], raw row-major data
#   | 4 x u64 rng state

MAGIC = b"FWGN"
VERSION = 1
_DTYPES = {0: np.float32, 1: np.float64}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def _config_blob(cfg: TrainConfig) -> bytes:
    kv = {
        "arch": cfg.arch.arch,
        "batch": cfg.batch,
        "d_updates_per_cycle": cfg.d_updates_per_cycle,
        "lambda_gp": repr(cfg.lambda_gp),
        "lambda_info": repr(cfg.lambda_info),
        "lr": repr(cfg.lr),
        "num_code": cfg.arch.num_code,
        "num_noise": cfg.arch.num_noise,
        "preset": cfg.preset,
        "seed": cfg.seed,
        "shuffle_radius": cfg.shuffle_radius,
        "total_steps": cfg.total_steps,
    }
    return "".join(f"{k}={kv[k]}\n" for k in sorted(kv)).encode("utf-8")


def _parse_config_blob(blob: bytes) -> TrainConfig:
    kv = {}
    for line in blob.decode("utf-8").splitlines():
        if line:
            k, _, v = line.partition("=")
            kv[k] = v
    arch = LatentConfig(kv["arch"], int(kv["num_code"]), int(kv["num_noise"]))
    return TrainConfig(arch=arch, total_steps=int(kv["total_steps"]), seed=int(kv["seed"]),
                       preset=kv["preset"], lambda_gp=float(kv["lambda_gp"]),
                       lambda_info=float(kv["lambda_info"]), batch=int(kv["batch"]),
                       d_updates_per_cycle=int(kv["d_updates_per_cycle"]), lr=float(kv["lr"]),
                       shuffle_radius=int(kv["shuffle_radius"]))


def _named_arrays(state: TrainState) -> dict[str, np.ndarray]:
    out = {}
    for prefix, net in (("gen", state.gen), ("dis", state.dis), ("q", state.q)):
        for name, t in net.tensors.items():
            out[f"{prefix}.{name}"] = t.data
    for name, arr in state.opt_g.m.items():
        out[f"opt.g.m.{name}"] = arr
    for name, arr in state.opt_g.v.items():
        out[f"opt.g.v.{name}"] = arr
    for name, arr in state.opt_d.m.items():
        out[f"opt.d.m.{name}"] = arr
    for name, arr in state.opt_d.v.items():
        out[f"opt.d.v.{name}"] = arr
    for name, arr in state.opt_q.v.items():
        out[f"opt.q.v.{name}"] = arr
    out["opt.g.t"] = np.array([state.opt_g.t], dtype=np.float64)
    out["opt.d.t"] = np.array([state.opt_d.t], dtype=np.float64)
    out["opt.q.t"] = np.array([state.opt_q.t], dtype=np.float64)
    # epoch sampler state, so resumed training replays the same batches
    if state._perm is not None:
        out["sampler.perm"] = state._perm.astype(np.float64)
        out["sampler.pos"] = np.array([state._pos], dtype=np.float64)
    return out


def save_checkpoint(state: TrainState, path) -> None:
    blob = _config_blob(state.cfg)
    arrays = _named_arrays(state)
    parts = [MAGIC, struct.pack("<IQ", VERSION, state.step),
             struct.pack("<I", len(blob)), blob, struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        nb = name.encode("utf-8")
        code = _DTYPE_CODES[arr.dtype]
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    parts.append(struct.pack("<4Q", *state.rng.state_words()))
    with open(path, "wb") as f:
        f.write(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(
                f"truncated checkpoint: wanted {n} bytes at offset {self.pos}, "
                f"file has {len(self.buf)}"
            )
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, data: np.ndarray | None = None) -> TrainState:
    with open(path, "rb") as f:
        r = _Reader(f.read())
    if r.take(4) != MAGIC:
        raise CheckpointError(f"bad magic in {path}")
    version, step = r.unpack("<IQ")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version} (expected {VERSION})")
    (blen,) = r.unpack("<I")
    cfg = _parse_config_blob(r.take(blen))
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        code, rank = r.unpack("<BB")
        if code not in _DTYPES:
            raise CheckpointError(f"unknown dtype code {code} for tensor {name}")
        dims = r.unpack(f"<{rank}I")
        dt = np.dtype(_DTYPES[code])
        raw = r.take(int(np.prod(dims, dtype=np.int64)) * dt.itemsize)
        arrays[name] = np.frombuffer(raw, dtype=dt).reshape(dims).copy()
    rng_words = r.unpack("<4Q")

    state = init_state(cfg, data)
    state.step = step
    for prefix, net in (("gen", state.gen), ("dis", state.dis), ("q", state.q)):
        for name, t in net.tensors.items():
            key = f"{prefix}.{name}"
            if key not in arrays:
                raise CheckpointError(f"checkpoint missing tensor {key}")
            if arrays[key].shape != t.data.shape:
                raise CheckpointError(
                    f"tensor {key} shape {arrays[key].shape} != expected {t.data.shape}"
                )
            t.data = arrays[key].astype(t.data.dtype)
    for name in state.opt_g.m:
        state.opt_g.m[name] = arrays[f"opt.g.m.{name}"]
        state.opt_g.v[name] = arrays[f"opt.g.v.{name}"]
    for name in state.opt_d.m:
        state.opt_d.m[name] = arrays[f"opt.d.m.{name}"]
        state.opt_d.v[name] = arrays[f"opt.d.v.{name}"]
    for name in state.opt_q.v:
        state.opt_q.v[name] = arrays[f"opt.q.v.{name}"]
    state.opt_g.t = int(arrays["opt.g.t"][0])
    state.opt_d.t = int(arrays["opt.d.t"][0])
    state.opt_q.t = int(arrays["opt.q.t"][0])
    if "sampler.perm" in arrays:
        state._perm = arrays["sampler.perm"].astype(np.int64)
        state._pos = int(arrays["sampler.pos"][0])
    state.rng.set_state_words(rng_words)
    return state
