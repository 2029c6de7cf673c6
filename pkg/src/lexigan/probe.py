"""Latent-code probing and statistical evaluation of a trained generator.

Generated outputs are labeled automatically by a spectrogram-template
oracle: one mean log-magnitude spectrogram per training class, nearest
template wins, and anything farther than that class's within-class
mean + 3*stdev distance is labeled "else". Code sweeps generate a fixed
number of outputs per class code at a chosen magnitude, holding the
noise constant across codes within a sample index so differences come
from the code alone. Extreme-value sweeps repeat this at increasing
magnitudes and additionally track per-code waveform variance, which
collapses when a code pins the output to a prototype.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ValidationError
from .models import LatentConfig, LatentVector, NetworkParams, encode_class, generate, q_estimate
from .regression import RegressionFit, fit_binary, fit_multinomial
from .rng import Rng

STFT_FRAME = 256
STFT_HOP = 128

ELSE_LABEL = -1


def log_spectrogram(samples: np.ndarray) -> np.ndarray:
    """log(1+|STFT|) with a Hann window; full frames only -> [frames, 129]."""
    x = np.asarray(samples, dtype=np.float64)
    if x.shape[0] < STFT_FRAME:
        raise ValidationError(f"clip of {x.shape[0]} samples is shorter than one frame")
    n_frames = 1 + (x.shape[0] - STFT_FRAME) // STFT_HOP
    window = np.hanning(STFT_FRAME)
    idx = np.arange(STFT_FRAME)[None, :] + STFT_HOP * np.arange(n_frames)[:, None]
    frames = x[idx] * window
    return np.log1p(np.abs(np.fft.rfft(frames, axis=1)))


@dataclass
class TemplateBank:
    templates: np.ndarray     # [K, frames, bins]
    class_names: list[str]
    reject_tau: np.ndarray    # [K] per-class else threshold

    @property
    def class_count(self) -> int:
        return self.templates.shape[0]


def build_templates(dataset) -> TemplateBank:
    """Per-class mean log-spectrogram plus the within-class rejection radius."""
    n_classes = len(dataset.class_names)
    specs = np.stack([log_spectrogram(c) for c in dataset.clips])
    templates = []
    taus = []
    for j in range(n_classes):
        members = specs[dataset.labels == j]
        if members.shape[0] == 0:
            raise ValidationError(f"class {dataset.class_names[j]!r} has no clips")
        tpl = members.mean(axis=0)
        templates.append(tpl)
        dists = np.sqrt(((members - tpl) ** 2).sum(axis=(1, 2)))
        taus.append(dists.mean() + 3.0 * dists.std())
    return TemplateBank(templates=np.stack(templates), class_names=list(dataset.class_names),
                        reject_tau=np.asarray(taus))


def classify(clip: np.ndarray, bank: TemplateBank):
    """Nearest-template class (ties to the lower index) or ELSE_LABEL beyond tau."""
    spec = log_spectrogram(clip)
    if spec.shape != bank.templates.shape[1:]:
        raise ValidationError(
            f"clip spectrogram {spec.shape} does not match templates {bank.templates.shape[1:]}"
        )
    dists = np.sqrt(((bank.templates - spec[None]) ** 2).sum(axis=(1, 2)))
    j = int(np.argmin(dists))
    if dists[j] > bank.reject_tau[j]:
        return ELSE_LABEL, dists
    return j, dists


def classify_batch(clips: np.ndarray, bank: TemplateBank) -> np.ndarray:
    return np.asarray([classify(c, bank)[0] for c in clips], dtype=np.int64)


def entropy_nats(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log(p)).sum())


@dataclass
class ProbeRow:
    code: np.ndarray          # the code vector used
    value: float
    counts: np.ndarray        # [class_count + 1], last column is "else"
    modal_class: int          # index into columns; class_count means "else"
    modal_frac: float
    entropy: float
    waveform_var: float | None = None


@dataclass
class ProbeReport:
    rows: list[ProbeRow]
    class_names: list[str]
    seed: int
    checkpoint_id: str = ""
    tie_note: str = ""

    def to_csv(self) -> str:
        cols = ",".join(self.class_names)
        lines = [f"code,value,{cols},else,modal_class,modal_frac,entropy"]
        for r in self.rows:
            code_s = "_".join(format(v, "g") for v in r.code)
            counts_s = ",".join(str(int(c)) for c in r.counts)
            modal = "else" if r.modal_class == len(self.class_names) else self.class_names[r.modal_class]
            lines.append(f"{code_s},{r.value:g},{counts_s},{modal},"
                         f"{r.modal_frac!r},{r.entropy!r}")
        return "\n".join(lines) + "\n"

    def to_jsonl(self) -> str:
        lines = []
        for r in self.rows:
            lines.append(json.dumps({
                "code": r.code.tolist(),
                "value": r.value,
                "counts": r.counts.tolist(),
                "class_names": self.class_names + ["else"],
                "modal_class": r.modal_class,
                "modal_frac": r.modal_frac,
                "entropy": r.entropy,
                "waveform_var": r.waveform_var,
                "seed": self.seed,
                "checkpoint_id": self.checkpoint_id,
            }))
        return "\n".join(lines) + "\n"


def _generate_batched(gen: NetworkParams, codes: np.ndarray, noise: np.ndarray,
                      chunk: int = 64) -> np.ndarray:
    outs = []
    with ad.no_grad():
        for lo in range(0, codes.shape[0], chunk):
            lv = LatentVector(code=codes[lo:lo + chunk], noise=noise[lo:lo + chunk])
            outs.append(generate(gen, lv).data)
    return np.concatenate(outs, axis=0)


def sweep_codes(gen: NetworkParams, bank: TemplateBank, value: float,
                samples_per_code: int, seed: int,
                checkpoint_id: str = "") -> ProbeReport:
    """Generate per-class-code batches at `value` and tabulate oracle labels.

    Noise is drawn once per sample index and reused for every code, so row
    differences are attributable to the code vector alone.
    """
    if not np.isfinite(value):
        raise ValidationError("sweep value must be finite")
    if samples_per_code < 1:
        raise ValidationError("samples_per_code must be >= 1")
    cfg = gen.cfg
    rng = Rng(seed)
    noise = rng.uniform(-1.0, 1.0, (samples_per_code, cfg.num_noise))
    n_classes = len(bank.class_names)
    rows = []
    for cls in range(cfg.class_count):
        code = encode_class(cfg, cls, value)
        codes = np.tile(code, (samples_per_code, 1))
        audio = _generate_batched(gen, codes, noise)
        labels = classify_batch(audio, bank)
        counts = np.zeros(n_classes + 1, dtype=np.int64)
        for lab in labels:
            counts[n_classes if lab == ELSE_LABEL else lab] += 1
        modal = int(np.argmax(counts))  # ties break toward the lower class index
        rows.append(ProbeRow(code=code, value=value, counts=counts,
                             modal_class=modal,
                             modal_frac=float(counts[modal] / samples_per_code),
                             entropy=entropy_nats(counts)))
    return ProbeReport(rows=rows, class_names=list(bank.class_names), seed=seed,
                       checkpoint_id=checkpoint_id,
                       tie_note="modal ties break toward the lower class index")


def extreme_probe(gen: NetworkParams, bank: TemplateBank, values, samples_per_code: int,
                  seed: int, checkpoint_id: str = "") -> list[ProbeReport]:
    """sweep_codes at strictly increasing magnitudes, plus per-code output variance.

    The variance of a code is the mean squared deviation of its generated
    waveforms from their per-code mean waveform.
    """
    values = list(values)
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValidationError("extreme_probe values must be strictly increasing")
    cfg = gen.cfg
    reports = []
    for value in values:
        report = sweep_codes(gen, bank, value, samples_per_code, seed, checkpoint_id)
        rng = Rng(seed)
        noise = rng.uniform(-1.0, 1.0, (samples_per_code, cfg.num_noise))
        for cls, row in enumerate(report.rows):
            codes = np.tile(encode_class(cfg, cls, value), (samples_per_code, 1))
            audio = _generate_batched(gen, codes, noise)
            mean_wave = audio.mean(axis=0, keepdims=True)
            row.waveform_var = float(((audio - mean_wave) ** 2).mean())
        reports.append(report)
    return reports


def retrieval_accuracy(gen: NetworkParams, q: NetworkParams, value: float,
                       samples_per_code: int, seed: int) -> float:
    """Fraction of generated outputs whose code the retrieval network recovers."""
    cfg = gen.cfg
    rng = Rng(seed)
    noise = rng.uniform(-1.0, 1.0, (samples_per_code, cfg.num_noise))
    hits = 0
    total = 0
    for cls in range(cfg.class_count):
        codes = np.tile(encode_class(cfg, cls, value), (samples_per_code, 1))
        audio = _generate_batched(gen, codes, noise)
        with ad.no_grad():
            logits = q_estimate(q, audio).data
        if cfg.arch == "ciw":
            pred = np.argmax(logits, axis=1)
        else:
            bits = (logits > 0).astype(np.int64)
            weights = 2 ** np.arange(cfg.num_code - 1, -1, -1)
            pred = bits @ weights
        hits += int((pred == cls).sum())
        total += samples_per_code
    return hits / total


def report_outcomes(report: ProbeReport):
    """Flatten a report into per-output (outcome label, code level) pairs.

    Outcome labels are 0..K-1 for classes and K for "else"; code levels are
    row indices (one level per probed code).
    """
    outcomes = []
    levels = []
    for level, row in enumerate(report.rows):
        for col, c in enumerate(row.counts):
            outcomes.extend([col] * int(c))
            levels.extend([level] * int(c))
    return np.asarray(outcomes, dtype=np.int64), np.asarray(levels, dtype=np.int64)


def code_predictor_fits(report: ProbeReport):
    """Multinomial fit with the code as predictor vs. the empty model."""
    outcomes, levels = report_outcomes(report)
    full = fit_multinomial(outcomes, levels)
    empty = fit_multinomial(outcomes, None)
    return full, empty


def spectral_features(clip: np.ndarray) -> dict:
    """DFT-magnitude-weighted centroid (Hz), RMS, and per-half centroids."""
    x = np.asarray(clip, dtype=np.float64)

    def centroid(seg):
        mag = np.abs(np.fft.rfft(seg))
        total = mag.sum()
        if total == 0:
            return 0.0
        freqs = np.fft.rfftfreq(seg.shape[0], d=1.0 / 16000)
        return float((freqs * mag).sum() / total)

    half = x.shape[0] // 2
    return {
        "centroid_hz": centroid(x),
        "rms": float(np.sqrt((x ** 2).mean())) if x.size else 0.0,
        "first_half_centroid": centroid(x[:half]),
        "second_half_centroid": centroid(x[half:]),
    }


def feature_association(feature_bits: np.ndarray, predicate: np.ndarray) -> RegressionFit:
    """Binary logistic fit of an acoustic predicate on featural code bits."""
    bits = np.asarray(feature_bits, dtype=np.float64)
    if bits.ndim != 2:
        raise ValidationError("feature_bits must be [N, n_features]")
    return fit_binary(np.asarray(predicate, dtype=np.int64), bits)


def sweep_feature_association(gen: NetworkParams, value: float, samples_per_code: int,
                              seed: int, predicate_fn) -> RegressionFit:
    """Generate over all featural codes and regress a predicate on the bits."""
    cfg = gen.cfg
    if cfg.arch != "fiw":
        raise ValidationError("feature association requires the featural architecture")
    rng = Rng(seed)
    noise = rng.uniform(-1.0, 1.0, (samples_per_code, cfg.num_noise))
    bits_rows = []
    preds = []
    for cls in range(cfg.class_count):
        code = encode_class(cfg, cls, value)
        codes = np.tile(code, (samples_per_code, 1))
        audio = _generate_batched(gen, codes, noise)
        bits = (code > 0).astype(np.float64)
        for wav in audio:
            bits_rows.append(bits)
            preds.append(1 if predicate_fn(wav) else 0)
    return feature_association(np.stack(bits_rows), np.asarray(preds))


def tv_distance(counts_a: np.ndarray, counts_b: np.ndarray) -> float:
    pa = counts_a / max(counts_a.sum(), 1)
    pb = counts_b / max(counts_b.sum(), 1)
    return float(0.5 * np.abs(pa - pb).sum())


def tv_null_threshold(n_categories: int, samples: int) -> float:
    """Order-of-magnitude bound on TV between two same-distribution samples."""
    return float(np.sqrt(n_categories / samples))
