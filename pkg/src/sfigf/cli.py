"""Command-line entry point: ``sfigf <subcommand> ...``.

Exit codes: 0 success, 1 validation failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data
from .girt import FormatError, write_girt
from .gradcheck import network_gradcheck
from .guided_filter import GuidedFilterConfig, filter_image
from .losses import HF_SIGMA, HF_SIZE
from .metrics import CSV_FIELDS, MetricReport
from .network import MFIFNet, SFIGFConfig, build_model, load_checkpoint, save_checkpoint
from .tensor import no_grad
from .train import DEFAULT_LR, TrainingDiverged, train

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
IMAGE_SUFFIXES = (".girt", ".pgm", ".ppm")


class UsageError(Exception):
    pass


def effective_seed(seed: int) -> int:
    env = os.environ.get("GIR_SEED")
    if env is None or env == "":
        return seed
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"GIR_SEED must be an integer, got {env!r}") from None


def _read(path) -> np.ndarray:
    return data.read_image(path)


def _find_image(directory: Path, stem: str, required: bool = True) -> Path | None:
    for suffix in IMAGE_SUFFIXES:
        candidate = directory / f"{stem}{suffix}"
        if candidate.exists():
            return candidate
    if required:
        raise FileNotFoundError(f"{directory}: no {stem}.girt/.pgm/.ppm")
    return None


def load_pair(directory, task: str) -> data.ImagePair:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"{d}: not a directory")
    gt_path = _find_image(d, "ground_truth", required=False)
    return data.ImagePair(
        _read(_find_image(d, "guide")),
        _read(_find_image(d, "target")),
        _read(gt_path) if gt_path else None,
        task,
    )


def save_pair(pair: data.ImagePair, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_girt(d / "guide.girt", pair.guide)
    write_girt(d / "target.girt", pair.target)
    if pair.ground_truth is not None:
        write_girt(d / "ground_truth.girt", pair.ground_truth)
    if pair.focus_mask is not None:
        write_girt(d / "focus_mask.girt", pair.focus_mask)


def synthetic_pair(task: str, size: int, scale: int, seed: int) -> data.ImagePair:
    spec = data.SyntheticSceneSpec(size=size, seed=seed)
    return data.make_gdsr_pair(spec, scale) if task == "gdsr" else data.make_mfif_pair(spec)


def fit_config(cfg: SFIGFConfig, pair: data.ImagePair, task: str, explicit: bool) -> SFIGFConfig:
    """Channel counts follow the data; an explicit config must already agree."""
    if task == "mfif":
        c = pair.guide.shape[0]
        wanted = dict(in_channels_i=c, in_channels_p=c, out_channels=c)
    else:
        wanted = dict(in_channels_i=pair.guide.shape[0], in_channels_p=pair.target.shape[0],
                      out_channels=pair.target.shape[0])
    if explicit:
        for key, value in wanted.items():
            if getattr(cfg, key) != value:
                raise UsageError(f"config {key} = {getattr(cfg, key)} but the data needs {value}")
        return cfg
    return replace(cfg, **wanted)


# ------------------------------------------------------------------ subcommands

def cmd_gf(args) -> int:
    guide, src = _read(args.guide), _read(args.input)
    if args.dump_coef and guide.shape[0] != 1:
        raise UsageError("--dump-coef needs a one-channel guide")
    cfg = GuidedFilterConfig(args.radius, args.eps)
    out, coef = filter_image(guide, src, cfg, naive=args.naive)
    data.write_image(out, args.out, bits=args.bits)
    if args.dump_coef:
        write_girt(f"{args.dump_coef}_A.girt", coef.A)
        write_girt(f"{args.dump_coef}_B.girt", coef.B)
    return EXIT_OK


def cmd_train(args) -> int:
    seed = effective_seed(args.seed)
    if args.data_dir:
        pair = load_pair(args.data_dir, args.task)
    else:
        pair = synthetic_pair(args.task, args.size, args.scale, seed)
    cfg = SFIGFConfig.load(args.config) if args.config else SFIGFConfig()
    cfg = replace(fit_config(cfg, pair, args.task, explicit=bool(args.config)), seed=seed)
    net = build_model("mfif" if args.task == "mfif" else "sfigf", cfg)

    def log(step, value):
        print(f"step {step} loss {value:.6f}", flush=True)

    try:
        result = train(net, pair, args.steps, args.lr, log=log, log_every=args.log_every,
                       hf_size=args.hf_size, hf_sigma=args.hf_sigma)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if args.out_ckpt:
        save_checkpoint(net, args.out_ckpt)
    if result.losses:
        print(f"initial {result.initial_loss:.6f} final {result.final_loss:.6f}")
    return EXIT_OK


def cmd_infer(args) -> int:
    net = load_checkpoint(args.ckpt)
    guide, src = _read(args.guide), _read(args.input)
    with no_grad():
        if isinstance(net, MFIFNet):
            q, _, _ = net(guide, src)
            data.write_image(q.data, args.out, bits=args.bits)
            return EXIT_OK
        result = net(guide, src)
    data.write_image(result.Q_Out.data, args.out, bits=args.bits)
    if args.out_qim:
        data.write_image(result.Q_Im.data, args.out_qim, bits=args.bits)
    if args.out_qfe:
        write_girt(args.out_qfe, result.q_Fe.data)
    return EXIT_OK


def cmd_eval(args) -> int:
    if len(args.pred) != len(args.ref):
        raise UsageError(f"{len(args.pred)} predictions but {len(args.ref)} references")

    def one(paths):
        pred, ref = _read(paths[0]), _read(paths[1])
        return MetricReport.compute(pred, ref, peak=args.peak, ratio=args.ratio)

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        reports = list(pool.map(one, zip(args.pred, args.ref)))
    lines = [",".join(CSV_FIELDS)] + [r.csv_row(str(p)) for r, p in zip(reports, args.pred)]
    if len(reports) > 1:
        lines.append(MetricReport.mean(reports).csv_row("mean"))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    rep = network_gradcheck(args.base_channels, args.num_scales, args.size, args.samples,
                            seed=effective_seed(args.seed), tolerance=args.tol)
    print(rep.summary())
    print(f"max relative error {rep.max_error():.3e}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_gen_data(args) -> int:
    seed = effective_seed(args.seed)
    out = Path(args.out_dir)
    for k in range(args.count):
        pair = synthetic_pair(args.task, args.size, args.scale, seed + k)
        save_pair(pair, out / f"{k:04d}")
    print(f"wrote {args.count} {args.task} pairs to {out}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest(args.check or None, skip_slow=args.quick)
    failed = [r for r in results if not r.passed and not r.known_gap]
    gaps = [r for r in results if not r.passed and r.known_gap]
    passed = len(results) - len(failed) - len(gaps)
    print(f"{passed}/{len(results)} checks passed" + (f", {len(gaps)} known gap(s)" if gaps else ""))
    return EXIT_FAIL if failed else EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sfigf", description="Guided image restoration toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gf", help="classical guided filter")
    p.add_argument("--guide", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--naive", action="store_true", help="use the per-window reference solver")
    p.add_argument("--dump-coef", metavar="PREFIX", help="also write PREFIX_A.girt and PREFIX_B.girt")
    p.add_argument("--bits", type=int, choices=(8, 16), default=8)
    p.set_defaults(func=cmd_gf)

    p = sub.add_parser("train", help="train on one pair")
    p.add_argument("--task", choices=("gdsr", "mfif"), default="gdsr")
    p.add_argument("--config", help="key = value network config file")
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--lr", type=float, default=DEFAULT_LR)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-ckpt")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--data-dir", help="directory with guide/target[/ground_truth] images")
    src.add_argument("--synthetic", action="store_true", help="generate the pair (default)")
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--scale", type=int, default=4)
    p.add_argument("--log-every", type=int, default=50)
    p.add_argument("--hf-size", type=int, default=HF_SIZE, help="focus-mask Gaussian size (mfif)")
    p.add_argument("--hf-sigma", type=float, default=HF_SIGMA, help="focus-mask Gaussian sigma (mfif)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="run a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--guide", required=True, help="guidance image (first source for MFIF)")
    p.add_argument("--input", required=True, help="image to restore (second source for MFIF)")
    p.add_argument("--out", required=True)
    p.add_argument("--out-qim")
    p.add_argument("--out-qfe", help="GIRT path for the feature-level fusion")
    p.add_argument("--bits", type=int, choices=(8, 16), default=8)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="metric CSV for prediction/reference pairs")
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--ref", nargs="+", required=True)
    p.add_argument("--peak", type=float, default=1.0)
    p.add_argument("--ratio", type=float, default=4.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference audit of the network")
    p.add_argument("--base-channels", type=int, default=4)
    p.add_argument("--num-scales", type=int, default=2)
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--samples", type=int, default=20, help="scalars per module")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gen-data", help="write synthetic pairs as GIRT files")
    p.add_argument("--task", choices=("gdsr", "mfif"), default="gdsr")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--scale", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("selftest", help="run the oracle checks")
    p.add_argument("--quick", action="store_true", help="skip the training and gradient audits")
    p.add_argument("--check", action="append", help="run only the named check (repeatable)")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
