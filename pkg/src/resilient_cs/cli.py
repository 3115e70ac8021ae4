"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import _kernels
from .channel import STREAM_DIAG, ChannelSpec, draw_mask_bernoulli, draw_mask_burst, run_lengths, stream
from .config import ExperimentConfig, load_config
from .evalbench import TrainedModel, run_grid
from .gradcheck import operator_suite, pipeline_check
from .imageio import load_dir
from .model import Checkpoint
from .train import run_schedule

log = logging.getLogger("resilient_cs")


def _rates(text: str) -> list[float]:
    try:
        rates = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of rates: {text!r}")
    if not rates or any(not 0.0 <= r <= 1.0 for r in rates):
        raise argparse.ArgumentTypeError(f"rates must be in [0, 1]: {text!r}")
    return rates


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return v


def _images(directory) -> list[np.ndarray]:
    files = load_dir(directory)
    if not files:
        raise FileNotFoundError(f"no .pgm images in {directory}")
    return [f.normalized() for f in files]


def cmd_train(args) -> int:
    cfg: ExperimentConfig = load_config(args.config)
    sampler, model, report = run_schedule(cfg.geometry, cfg.train, _images(cfg.train_images))
    ckpt = Checkpoint.from_models(sampler, model, cfg.train.channel, meta={"config": report.config})
    out = Path(args.out)
    ckpt.save(out)
    out.with_suffix(".report.txt").write_text(report.text(), encoding="utf-8")
    out.with_suffix(".loss.csv").write_text(report.loss_csv(), encoding="utf-8")
    print(f"wrote {out}")
    for ph in report.phases:
        if ph.losses:
            print(f"{ph.phase}: final training loss {ph.losses[-1]:.6g}")
    return 0


def _grid(entries, args) -> int:
    table = run_grid(entries, _images(args.images), test_rates=args.test_drops,
                     trials=args.trials, seed=args.seed)
    table.write_csv(args.out)
    print(f"wrote {args.out} ({len(table.cells)} cells)")
    return 1 if any(c.error for c in table.cells) else 0


def cmd_eval(args) -> int:
    ckpt = Checkpoint.load(args.ckpt)
    sampler, model = ckpt.build()
    return _grid([TrainedModel(Path(args.ckpt).stem, sampler, model, ckpt.channel)], args)


def cmd_grid(args) -> int:
    paths = sorted(Path(args.configs).glob("*.ckpt"))
    if not paths:
        raise FileNotFoundError(f"no .ckpt checkpoints in {args.configs}")
    entries = []
    for p in paths:
        ckpt = Checkpoint.load(p)
        sampler, model = ckpt.build()
        entries.append(TrainedModel(p.stem, sampler, model, ckpt.channel))
    return _grid(entries, args)


def cmd_mask_stats(args) -> int:
    if args.model == "burst" and args.rate > 0.5:
        raise ValueError("burst model needs rate <= 0.5")
    realized = []
    runs = []
    for i in range(args.masks):
        rng = stream(args.seed, STREAM_DIAG, i)
        if args.model == "bernoulli":
            m = draw_mask_bernoulli((args.n,), args.rate, rng)
        else:
            m = draw_mask_burst((args.n,), args.rate, args.burst_len, rng)
        realized.append(m.realized_rate)
        runs.append(run_lengths(m.values))
    runs = np.concatenate(runs)
    sigma = np.sqrt(args.rate * (1 - args.rate) / args.n)
    print(f"model            {args.model}")
    print(f"nominal rate     {args.rate:g}")
    print(f"entries          {args.n}")
    print(f"masks            {args.masks}")
    print(f"realized rate    {np.mean(realized):.6f}")
    if args.masks > 1:
        print(f"realized std     {np.std(realized):.6f}")
    print(f"binomial sigma   {sigma:.6f}")
    print(f"mean loss run    {runs.mean() if runs.size else 0.0:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    worst = 0.0
    for name, res in operator_suite(seed=args.seed, eps=args.eps).items():
        print(f"{name:16s} max_rel_err={res.max_rel_error:.3e} checked={res.checked}")
        worst = max(worst, res.max_rel_error)
    res = pipeline_check(cfg.geometry, subrate=cfg.train.subrate, seed=args.seed, eps=args.eps)
    print(f"{'pipeline':16s} max_rel_err={res.max_rel_error:.3e} checked={res.checked} "
          f"kink_skips={res.skipped_kinks}")
    worst = max(worst, res.max_rel_error)
    ok = worst < args.tol
    print(f"max relative error {worst:.3e} ({'PASS' if ok else 'FAIL'} at tol {args.tol:g})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="resilient-cs", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.set_defaults(func=cmd_train)

    def eval_flags(q):
        q.add_argument("--images", required=True, help="directory of .pgm test images")
        q.add_argument("--test-drops", type=_rates, default=[0.0, 0.1, 0.2, 0.3])
        q.add_argument("--trials", type=_positive_int, default=10)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--out", required=True, help="CSV report path")

    e = sub.add_parser("eval", help="evaluate one checkpoint")
    e.add_argument("--ckpt", required=True)
    eval_flags(e)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("grid", help="evaluate every checkpoint in a directory")
    g.add_argument("--configs", required=True, help="directory of .ckpt files")
    eval_flags(g)
    g.set_defaults(func=cmd_grid)

    m = sub.add_parser("mask-stats", help="loss-mask statistics")
    m.add_argument("--model", choices=["bernoulli", "burst"], default="bernoulli")
    m.add_argument("--rate", type=float, required=True)
    m.add_argument("--n", type=_positive_int, default=10000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--burst-len", type=float, default=8.0)
    m.add_argument("--masks", type=_positive_int, default=1)
    m.set_defaults(func=cmd_mask_stats)

    c = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    c.add_argument("--config", default=None)
    c.add_argument("--eps", type=float, default=1e-5)
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "mask-stats" and not 0.0 <= args.rate <= 1.0:
        parser.error(f"--rate must be in [0, 1], got {args.rate}")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.debug("kernel backend: %s", _kernels.BACKEND)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
