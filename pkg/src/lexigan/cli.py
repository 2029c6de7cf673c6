"""Command-line entry point: train, generate, probe, selftest.

Every command is a pure function of its flags, seed, and input files;
outputs carry no timestamps or hostnames, so identical invocations
produce byte-identical artifacts. The fully resolved configuration is
printed as the first log line and written next to the outputs.

Exit codes: 0 success, 2 usage/input error, 3 runtime fault.
"""

from __future__ import annotations

import argparse
import os
import sys


def _set_thread_env(argv) -> None:
    """Apply --threads / LEXIGAN_THREADS before numpy gets imported."""
    threads = os.environ.get("LEXIGAN_THREADS")
    for i, a in enumerate(argv):
        if a == "--threads" and i + 1 < len(argv):
            threads = argv[i + 1]
        elif a.startswith("--threads="):
            threads = a.split("=", 1)[1]
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(threads))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lexigan",
                                 description="word-level audio GAN trainer and prober")
    sub = ap.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train the three networks on a word corpus")
    tr.add_argument("--arch", choices=["ciw", "fiw"], default=None)
    tr.add_argument("--classes", type=int, default=None, help="one-hot width (ciw)")
    tr.add_argument("--features", type=int, default=None, help="feature count (fiw)")
    tr.add_argument("--preset", choices=["desk", "paper"], default=None)
    tr.add_argument("--data", default=None, help="corpus directory (one subdir per word)")
    tr.add_argument("--lexicon", default=None, help="synthetic lexicon spec file")
    tr.add_argument("--segment-len", type=int, default=None)
    tr.add_argument("--steps", type=int, default=None)
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--batch", type=int, default=None)
    tr.add_argument("--d-updates", type=int, default=None)
    tr.add_argument("--lambda-gp", type=float, default=None)
    tr.add_argument("--lambda-info", type=float, default=None)
    tr.add_argument("--lr", type=float, default=None)
    tr.add_argument("--shuffle-radius", type=int, default=None)
    tr.add_argument("--ckpt-every", type=int, default=None)
    tr.add_argument("--out", required=True)
    tr.add_argument("--config", default=None, help="key=value defaults file")
    tr.add_argument("--threads", type=int, default=None)

    ge = sub.add_parser("generate", help="write WAVs from a trained checkpoint")
    ge.add_argument("--ckpt", required=True)
    ge.add_argument("--out", required=True)
    ge.add_argument("--class", dest="class_index", type=int, default=None)
    ge.add_argument("--value", type=float, default=1.0)
    ge.add_argument("--code", default=None, help="explicit code vector, comma separated")
    ge.add_argument("--count", type=int, default=1)
    ge.add_argument("--seed", type=int, default=0)
    ge.add_argument("--threads", type=int, default=None)

    pr = sub.add_parser("probe", help="code sweeps, oracle labeling, regression fits")
    pr.add_argument("--ckpt", required=True)
    pr.add_argument("--data", default=None)
    pr.add_argument("--lexicon", default=None)
    pr.add_argument("--segment-len", type=int, default=None)
    pr.add_argument("--values", default="1", help="comma-separated code magnitudes")
    pr.add_argument("--per-code", type=int, default=100)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--out", required=True)
    pr.add_argument("--threads", type=int, default=None)

    st = sub.add_parser("selftest", help="gradient checks, conv oracles, WAV round trip")
    st.add_argument("--corrupt", default=None, help=argparse.SUPPRESS)
    st.add_argument("--threads", type=int, default=None)
    return ap


TRAIN_DEFAULTS = {
    "arch": "fiw", "classes": 5, "features": 2, "preset": "desk",
    "segment_len": 130, "steps": 100, "seed": 0, "batch": 64, "d_updates": 5,
    "lambda_gp": 10.0, "lambda_info": 1.0, "lr": 1e-4, "shuffle_radius": 2,
    "ckpt_every": 500,
}


def _read_config_file(path) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            k, _, v = line.partition("=")
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def _resolve(args, file_cfg: dict) -> dict:
    """flags > config file > defaults."""
    cfg = dict(TRAIN_DEFAULTS)
    for k, v in file_cfg.items():
        if k in cfg:
            cfg[k] = type(cfg[k])(v)
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def _emit_config(resolved: dict, out_dir=None) -> None:
    line = " ".join(f"{k}={resolved[k]}" for k in sorted(resolved))
    print(f"config {line}")
    if out_dir is not None:
        with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as f:
            for k in sorted(resolved):
                f.write(f"{k}={resolved[k]}\n")


def _load_dataset(data_dir, lexicon_path, slot_len, seed, segment_len):
    from .corpus import load_corpus_dir, parse_lexicon, synth_lexicon
    if data_dir is not None:
        return load_corpus_dir(data_dir, slot_len)
    with open(lexicon_path, "r", encoding="utf-8") as f:
        spec = parse_lexicon(f.read(), segment_len=segment_len)
    return synth_lexicon(spec, slot_len, seed)


def cmd_train(args) -> int:
    from .errors import TrainingFault
    from .models import PRESETS, latent_config_for_preset
    from .training import (LOSS_CSV_HEADER, TrainConfig, init_state, loss_csv_row,
                           save_checkpoint, train_cycle)

    if (args.data is None) == (args.lexicon is None):
        print("train: exactly one of --data or --lexicon is required", file=sys.stderr)
        return 2
    file_cfg = _read_config_file(args.config) if args.config else {}
    r = _resolve(args, file_cfg)
    num_code = r["classes"] if r["arch"] == "ciw" else r["features"]
    lat = latent_config_for_preset(r["arch"], num_code, r["preset"])
    slot_len = PRESETS[r["preset"]]["slot_len"]
    os.makedirs(args.out, exist_ok=True)
    resolved = {k: r[k] for k in sorted(r)}
    resolved["data"] = args.data or ""
    resolved["lexicon"] = args.lexicon or ""
    resolved["num_code"] = num_code
    resolved["num_noise"] = lat.num_noise
    resolved["out"] = args.out
    _emit_config(resolved, args.out)

    dataset = _load_dataset(args.data, args.lexicon, slot_len, r["seed"], r["segment_len"])
    cfg = TrainConfig(arch=lat, total_steps=r["steps"], seed=r["seed"], preset=r["preset"],
                      lambda_gp=r["lambda_gp"], lambda_info=r["lambda_info"],
                      batch=r["batch"], d_updates_per_cycle=r["d_updates"], lr=r["lr"],
                      shuffle_radius=r["shuffle_radius"])
    state = init_state(cfg, dataset.clips)
    ckpt_path = os.path.join(args.out, "ckpt.fwgn")
    csv_path = os.path.join(args.out, "loss.csv")
    try:
        with open(csv_path, "w", encoding="utf-8") as csv:
            csv.write(LOSS_CSV_HEADER + "\n")
            for _ in range(cfg.total_steps):
                report = train_cycle(state)
                csv.write(loss_csv_row(report) + "\n")
                if r["ckpt_every"] > 0 and state.step % r["ckpt_every"] == 0:
                    save_checkpoint(state, ckpt_path)
        save_checkpoint(state, ckpt_path)
    except TrainingFault as e:
        dump = os.path.join(args.out, "fault.fwgn")
        save_checkpoint(state, dump)
        print(f"training fault: {e} (state dumped to {dump})", file=sys.stderr)
        return 3
    print(f"wrote {ckpt_path} and {csv_path}")
    return 0


def cmd_generate(args) -> int:
    import numpy as np

    from .corpus import write_wav
    from .models import LatentVector, encode_class, generate
    from .rng import Rng
    from .training import load_checkpoint
    from . import autodiff as ad

    state = load_checkpoint(args.ckpt)
    cfg = state.cfg.arch
    if args.code is not None:
        code = np.asarray([float(v) for v in args.code.split(",")])
        if code.shape[0] != cfg.num_code:
            print(f"generate: code has {code.shape[0]} entries, checkpoint expects "
                  f"{cfg.num_code}", file=sys.stderr)
            return 2
    elif args.class_index is not None:
        code = encode_class(cfg, args.class_index, args.value)
    else:
        print("generate: need --code or --class", file=sys.stderr)
        return 2
    resolved = {"ckpt": args.ckpt, "code": "_".join(format(v, "g") for v in code),
                "count": args.count, "seed": args.seed, "out": args.out}
    _emit_config(resolved)
    rng = Rng(args.seed)
    noise = rng.uniform(-1.0, 1.0, (args.count, cfg.num_noise))
    codes = np.tile(code, (args.count, 1))
    code_dir = os.path.join(args.out, resolved["code"])
    os.makedirs(code_dir, exist_ok=True)
    with ad.no_grad():
        audio = generate(state.gen, LatentVector(code=codes, noise=noise)).data
    for i, wav in enumerate(audio):
        write_wav(np.clip(wav, -1.0, 1.0), os.path.join(code_dir, f"{i}.wav"))
    print(f"wrote {args.count} files under {code_dir}")
    return 0


def cmd_probe(args) -> int:
    import json

    from .models import PRESETS
    from .probe import (build_templates, code_predictor_fits, extreme_probe,
                        retrieval_accuracy, sweep_codes)
    from .training import load_checkpoint

    if (args.data is None) == (args.lexicon is None):
        print("probe: exactly one of --data or --lexicon is required", file=sys.stderr)
        return 2
    values = [float(v) for v in args.values.split(",") if v.strip()]
    state = load_checkpoint(args.ckpt)
    slot_len = PRESETS[state.cfg.preset]["slot_len"]
    seg_len = args.segment_len if args.segment_len is not None else 130
    dataset = _load_dataset(args.data, args.lexicon, slot_len, state.cfg.seed, seg_len)
    bank = build_templates(dataset)
    os.makedirs(args.out, exist_ok=True)
    resolved = {"ckpt": args.ckpt, "values": ",".join(format(v, "g") for v in values),
                "per_code": args.per_code, "seed": args.seed, "out": args.out}
    _emit_config(resolved, args.out)

    if len(values) > 1:
        reports = extreme_probe(state.gen, bank, values, args.per_code, args.seed,
                                checkpoint_id=os.path.basename(args.ckpt))
    else:
        reports = [sweep_codes(state.gen, bank, values[0], args.per_code, args.seed,
                               checkpoint_id=os.path.basename(args.ckpt))]
    regression = {}
    variance_lines = ["code,value,waveform_var"]
    retrieval = {}
    for value, report in zip(values, reports):
        tag = format(value, "g")
        with open(os.path.join(args.out, f"probe_v{tag}.csv"), "w", encoding="utf-8") as f:
            f.write(report.to_csv())
        with open(os.path.join(args.out, f"probe_v{tag}.jsonl"), "w", encoding="utf-8") as f:
            f.write(report.to_jsonl())
        full, empty = code_predictor_fits(report)
        regression[tag] = {"full": json.loads(full.to_json()),
                           "empty": json.loads(empty.to_json()),
                           "aic_full": full.aic, "aic_empty": empty.aic}
        for row in report.rows:
            if row.waveform_var is not None:
                code_s = "_".join(format(v, "g") for v in row.code)
                variance_lines.append(f"{code_s},{tag},{row.waveform_var!r}")
        retrieval[tag] = retrieval_accuracy(state.gen, state.q, value, args.per_code,
                                            args.seed)
    with open(os.path.join(args.out, "regression.json"), "w", encoding="utf-8") as f:
        json.dump(regression, f, indent=1, sort_keys=True)
    if len(variance_lines) > 1:
        with open(os.path.join(args.out, "variance.csv"), "w", encoding="utf-8") as f:
            f.write("\n".join(variance_lines) + "\n")
    with open(os.path.join(args.out, "retrieval.json"), "w", encoding="utf-8") as f:
        json.dump(retrieval, f, indent=1, sort_keys=True)
    print(f"wrote probe reports for values {values} under {args.out}")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest
    ok, results = run_selftest(corrupt=args.corrupt)
    for name, passed, detail in results:
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    return 0 if ok else 1


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _set_thread_env(argv)
    ap = build_parser()
    args = ap.parse_args(argv)
    from .errors import LexiganError, TrainingFault
    handler = {"train": cmd_train, "generate": cmd_generate,
               "probe": cmd_probe, "selftest": cmd_selftest}[args.command]
    try:
        return handler(args)
    except TrainingFault as e:
        print(f"runtime fault: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3
    except LexiganError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
