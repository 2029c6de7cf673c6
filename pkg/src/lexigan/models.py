"""Generator, critic, and code-retrieval networks plus latent-space tools.

Two latent layouts are supported: a one-hot code over n word classes
("ciw") and an n-bit featural code addressing 2^n classes ("fiw"), each
concatenated with uniform noise. Two size presets exist: `desk`
(1024-sample output, three upsampling layers) for fast verifiable runs,
and `paper` (16384-sample output, five layers). Both share one forward
code path; only the layer tables differ.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError, ValidationError
from .rng import Rng

ARCH_CIW = "ciw"
ARCH_FIW = "fiw"

GEN = "generator"
DISC = "discriminator"
QNET = "qnet"

# Layer tables. latent_total is the full generator input width; the noise
# width is latent_total - num_code. start_ch = model_dim * 2**(layers-1).
PRESETS = {
    "desk": dict(latent_total=32, model_dim=16, layers=3, base_len=16,
                 kernel=25, stride=4, slot_len=1024),
    "paper": dict(latent_total=100, model_dim=64, layers=5, base_len=16,
                  kernel=25, stride=4, slot_len=16384),
}

DEFAULT_SHUFFLE_RADIUS = 2


@dataclass(frozen=True)
class LatentConfig:
    arch: str
    num_code: int
    num_noise: int

    def __post_init__(self):
        if self.arch not in (ARCH_CIW, ARCH_FIW):
            raise ValidationError(f"arch must be 'ciw' or 'fiw', got {self.arch!r}")
        if self.num_code < 1 or self.num_noise < 1:
            raise ValidationError("num_code and num_noise must both be >= 1")

    @property
    def total(self) -> int:
        return self.num_code + self.num_noise

    @property
    def class_count(self) -> int:
        return self.num_code if self.arch == ARCH_CIW else 2 ** self.num_code


def latent_config_for_preset(arch: str, num_code: int, preset: str) -> LatentConfig:
    """Derive the noise width from the preset's fixed total latent size."""
    total = PRESETS[preset]["latent_total"]
    if num_code >= total:
        raise ValidationError(f"num_code {num_code} leaves no noise slots in total {total}")
    return LatentConfig(arch, num_code, total - num_code)


@dataclass
class LatentVector:
    """A batch of generator inputs: categorical code rows plus noise rows."""

    code: np.ndarray   # [B, num_code]
    noise: np.ndarray  # [B, num_noise]

    @property
    def batch(self) -> int:
        return self.code.shape[0]

    def matrix(self) -> np.ndarray:
        return np.concatenate([self.code, self.noise], axis=1)


def sample_latent(cfg: LatentConfig, rng: Rng, batch: int) -> LatentVector:
    """Uniform training codes (one-hot class / fair bits) and U(-1,1) noise."""
    if batch < 1:
        raise ValidationError("batch must be >= 1")
    if cfg.arch == ARCH_CIW:
        idx = rng.integers(cfg.num_code, (batch,))
        code = np.zeros((batch, cfg.num_code))
        code[np.arange(batch), idx] = 1.0
    else:
        code = rng.bits((batch, cfg.num_code)).astype(np.float64)
    noise = rng.uniform(-1.0, 1.0, (batch, cfg.num_noise))
    return LatentVector(code=code, noise=noise)


def encode_class(cfg: LatentConfig, class_index: int, value: float) -> np.ndarray:
    """Code vector for a class at an arbitrary magnitude (probing uses >1).

    ciw: `value` at the class position. fiw: `value` at every 1-bit of the
    class index written MSB-first across the features.
    """
    if not (0 <= class_index < cfg.class_count):
        raise ValidationError(
            f"class index {class_index} out of range [0,{cfg.class_count}) for {cfg.arch}"
        )
    code = np.zeros(cfg.num_code)
    if cfg.arch == ARCH_CIW:
        code[class_index] = value
    else:
        for pos in range(cfg.num_code):
            bit = (class_index >> (cfg.num_code - 1 - pos)) & 1
            if bit:
                code[pos] = value
    return code


def class_of_code(cfg: LatentConfig, code_rows: np.ndarray) -> np.ndarray:
    """Recover class indices from training-time {0,1} code rows."""
    if cfg.arch == ARCH_CIW:
        return np.argmax(code_rows, axis=1)
    weights = 2 ** np.arange(cfg.num_code - 1, -1, -1)
    return (code_rows > 0.5).astype(np.int64) @ weights


@dataclass
class NetworkParams:
    net_kind: str
    preset: str
    cfg: LatentConfig
    tensors: dict[str, Tensor] = field(default_factory=dict)
    out_dim: int = 1
    shuffle_radius: int = DEFAULT_SHUFFLE_RADIUS

    @property
    def table(self) -> dict:
        return PRESETS[self.preset]

    @property
    def slot_len(self) -> int:
        return self.table["slot_len"]

    def param_count(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def set_requires_grad(self, flag: bool) -> None:
        for t in self.tensors.values():
            t.requires_grad = flag


def _xavier(rng: Rng, shape, fan_in, fan_out, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape).astype(dtype)


def _gen_channels(table) -> list[int]:
    d, n = table["model_dim"], table["layers"]
    chans = [d * 2 ** (n - 1 - i) for i in range(n)] + [1]
    return chans  # length layers+1, e.g. desk [64, 32, 16, 1]


def build_generator(cfg: LatentConfig, preset: str, rng: Rng,
                    dtype=np.float32) -> NetworkParams:
    table = PRESETS[preset]
    if cfg.total != table["latent_total"]:
        raise ValidationError(
            f"latent total {cfg.total} != preset {preset} total {table['latent_total']}"
        )
    chans = _gen_channels(table)
    K = table["kernel"]
    p = NetworkParams(net_kind=GEN, preset=preset, cfg=cfg)
    dense_out = table["base_len"] * chans[0]
    p.tensors["dense.w"] = Tensor(
        _xavier(rng, (cfg.total, dense_out), cfg.total, dense_out, dtype), requires_grad=True)
    p.tensors["dense.b"] = Tensor(np.zeros(dense_out, dtype=dtype), requires_grad=True)
    for i in range(table["layers"]):
        cin, cout = chans[i], chans[i + 1]
        p.tensors[f"tconv{i}.k"] = Tensor(
            _xavier(rng, (cin, cout, K), cin * K, cout * K, dtype), requires_grad=True)
        p.tensors[f"tconv{i}.b"] = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)
    return p


def build_critic(kind: str, cfg: LatentConfig, preset: str, rng: Rng,
                 dtype=np.float32, shuffle_radius: int = DEFAULT_SHUFFLE_RADIUS) -> NetworkParams:
    """Discriminator or code-retrieval network: same trunk, different head width."""
    if kind not in (DISC, QNET):
        raise ValidationError(f"critic kind must be discriminator or qnet, got {kind!r}")
    table = PRESETS[preset]
    chans = [1] + [table["model_dim"] * 2 ** i for i in range(table["layers"])]
    K = table["kernel"]
    out_dim = 1 if kind == DISC else cfg.num_code
    p = NetworkParams(net_kind=kind, preset=preset, cfg=cfg, out_dim=out_dim,
                      shuffle_radius=shuffle_radius)
    for i in range(table["layers"]):
        cin, cout = chans[i], chans[i + 1]
        p.tensors[f"conv{i}.k"] = Tensor(
            _xavier(rng, (cout, cin, K), cin * K, cout * K, dtype), requires_grad=True)
        p.tensors[f"conv{i}.b"] = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)
    flat = chans[-1] * table["base_len"]
    p.tensors["out.w"] = Tensor(
        _xavier(rng, (flat, out_dim), flat, out_dim, dtype), requires_grad=True)
    p.tensors["out.b"] = Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=True)
    return p


def build_networks(cfg: LatentConfig, preset: str, rng: Rng, dtype=np.float32,
                   shuffle_radius: int = DEFAULT_SHUFFLE_RADIUS):
    gen = build_generator(cfg, preset, rng, dtype)
    dis = build_critic(DISC, cfg, preset, rng, dtype, shuffle_radius)
    q = build_critic(QNET, cfg, preset, rng, dtype, shuffle_radius)
    return gen, dis, q


# ---------------------------------------------------------------------------
# forward passes


def generator_forward(g: NetworkParams, z: Tensor) -> Tensor:
    """dense -> relu -> reshape -> transposed-conv stack -> tanh, output [B, slot]."""
    table = g.table
    if z.data.ndim != 2 or z.data.shape[1] != g.cfg.total:
        raise ValidationError(
            f"generator expects latents [B,{g.cfg.total}], got {z.data.shape}"
        )
    B = z.data.shape[0]
    chans = _gen_channels(table)
    K, S = table["kernel"], table["stride"]
    h = ad.dense(z, g.tensors["dense.w"], g.tensors["dense.b"])
    h = ad.activation(h, "relu")
    h = ad.reshape(h, (B, chans[0], table["base_len"]))
    length = table["base_len"]
    for i in range(table["layers"]):
        full = (length - 1) * S + K
        crop_total = full - length * S
        crop = (crop_total // 2, crop_total - crop_total // 2)
        h = ad.conv1d_transpose(h, g.tensors[f"tconv{i}.k"], stride=S, crop=crop)
        h = ad.add_channel_bias(h, g.tensors[f"tconv{i}.b"])
        h = ad.activation(h, "tanh" if i == table["layers"] - 1 else "relu")
        length *= S
    return ad.reshape(h, (B, length))


def generate(g: NetworkParams, latents: LatentVector) -> Tensor:
    if latents.code.shape[1] != g.cfg.num_code or latents.noise.shape[1] != g.cfg.num_noise:
        raise ValidationError(
            f"latent widths ({latents.code.shape[1]}+{latents.noise.shape[1]}) do not match "
            f"config ({g.cfg.num_code}+{g.cfg.num_noise})"
        )
    z = Tensor(latents.matrix().astype(_param_dtype(g)))
    return generator_forward(g, z)


def _param_dtype(p: NetworkParams):
    return next(iter(p.tensors.values())).data.dtype


def draw_shuffle_shifts(p: NetworkParams, batch: int, rng: Rng) -> list[np.ndarray]:
    """One shift per (batch row, channel) for every shuffled conv layer."""
    table = p.table
    r = p.shuffle_radius
    shifts = []
    chans = [table["model_dim"] * 2 ** i for i in range(table["layers"])]
    for i in range(table["layers"] - 1):
        shifts.append(rng.integers(2 * r + 1, (batch, chans[i])) - r)
    return shifts


def critic_forward(p: NetworkParams, audio: Tensor, shifts: list[np.ndarray] | None = None,
                   want_trace: bool = False):
    """Shared trunk of the discriminator and the code-retrieval network.

    conv(stride 4) -> leaky_relu -> phase shuffle after every layer but the
    last, then a dense head. `shifts` carries pre-drawn shuffle offsets (None
    or radius 0 disables shuffling). With `want_trace` the pieces needed to
    rebuild a directional-derivative pass are returned as well.
    """
    table = p.table
    if audio.data.ndim != 2 or audio.data.shape[1] != table["slot_len"]:
        raise ValidationError(
            f"{p.net_kind} expects audio [B,{table['slot_len']}], got {audio.data.shape}"
        )
    B, L = audio.data.shape
    K, S = table["kernel"], table["stride"]
    h = ad.reshape(audio, (B, 1, L))
    trace = {"in_len": L, "layers": []}
    length = L
    for i in range(table["layers"]):
        pad = ad.same_pad(length, K, S)
        k = p.tensors[f"conv{i}.k"]
        h = ad.conv1d(h, k, stride=S, padding=pad)
        h = ad.add_channel_bias(h, p.tensors[f"conv{i}.b"])
        slope = ad.activation_slope(h.data, "leaky_relu") if want_trace else None
        h = ad.activation(h, "leaky_relu")
        layer_shifts = None
        if shifts is not None and p.shuffle_radius > 0 and i < table["layers"] - 1:
            layer_shifts = shifts[i]
            h = ad.phase_shuffle(h, layer_shifts)
        trace["layers"].append({"k": k, "stride": S, "pad": pad,
                                "slope": slope, "shifts": layer_shifts})
        length = -(-length // S)
    flat = h.data.shape[1] * h.data.shape[2]
    trace["flat"] = (B, flat)
    h = ad.reshape(h, (B, flat))
    out = ad.dense(h, p.tensors["out.w"], p.tensors["out.b"])
    if p.net_kind == DISC:
        out = ad.reshape(out, (B,))
    if want_trace:
        return out, trace
    return out


def critic_jvp(p: NetworkParams, trace: dict, direction: np.ndarray) -> Tensor:
    """Directional derivative of the critic along `direction` at the traced point.

    Rebuilds the forward pass on the tangent: convolutions reuse the live
    kernel tensors (so the result stays differentiable in the parameters),
    activations become multiplications by their recorded slopes, and the
    same shuffle offsets are replayed. Slopes are treated as constants,
    which is exact almost everywhere for the piecewise-linear trunk.
    """
    B = direction.shape[0]
    t = Tensor(direction.astype(_param_dtype(p)))
    t = ad.reshape(t, (B, 1, trace["in_len"]))
    for rec in trace["layers"]:
        t = ad.conv1d(t, rec["k"], stride=rec["stride"], padding=rec["pad"])
        t = ad.mul(t, Tensor(rec["slope"]))
        if rec["shifts"] is not None:
            t = ad.phase_shuffle(t, rec["shifts"])
    t = ad.reshape(t, trace["flat"])
    zero_bias = Tensor(np.zeros(p.out_dim, dtype=_param_dtype(p)))
    t = ad.dense(t, p.tensors["out.w"], zero_bias)
    return ad.reshape(t, (B,)) if p.net_kind == DISC else t


def discriminate(d: NetworkParams, audio, rng: Rng | None = None) -> Tensor:
    """Realness scores [B]; phase shuffle is active when an rng is supplied."""
    if d.net_kind != DISC:
        raise ValidationError(f"discriminate needs a discriminator, got {d.net_kind}")
    if not isinstance(audio, Tensor):
        audio = Tensor(np.asarray(audio, dtype=_param_dtype(d)))
    shifts = None
    if rng is not None and d.shuffle_radius > 0:
        shifts = draw_shuffle_shifts(d, audio.data.shape[0], rng)
    return critic_forward(d, audio, shifts)


def q_estimate(q: NetworkParams, audio) -> Tensor:
    """Raw code logits [B, num_code]; deterministic (no shuffle at probe time)."""
    if q.net_kind != QNET:
        raise ValidationError(f"q_estimate needs a qnet, got {q.net_kind}")
    if not isinstance(audio, Tensor):
        audio = Tensor(np.asarray(audio, dtype=_param_dtype(q)))
    return critic_forward(q, audio, None)
