"""Command-line entry point: ``nasaswin {train,eval,analyze,synth,selftest}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import checkpoint, selftest
from .analysis import analyze
from .config import dump_config, load_config
from .data import load_manifest, synth
from .errors import NasaSwinError
from .evaluate import evaluate, format_table, write_metrics_csv
from .model import ModelConfig, NasaSwin
from .residual import DenoiserSpec
from .train import TrainConfig, train

THREADS_NOTE = "Worker parallelism is capped by the NASASWIN_THREADS environment variable (default 1)."


def _cmd_train(args) -> int:
    if args.config:
        model_cfg, train_cfg = load_config(args.config)
    else:
        model_cfg, train_cfg = ModelConfig(), TrainConfig()
    if args.seed is not None:
        train_cfg.seed = args.seed
    if args.steps is not None:
        train_cfg.max_steps = args.steps
    manifest = load_manifest(args.manifest, split="train")
    model = NasaSwin(model_cfg, seed=train_cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(model_cfg, train_cfg))
    result = train(model, manifest, train_cfg, out)
    print(f"trained {result.steps} steps on {len(manifest)} images; final loss {result.losses[-1]:.4f}")
    print(f"checkpoint: {result.checkpoints[-1]}")
    return 0


def _cmd_eval(args) -> int:
    names = args.name or []
    if names and len(names) != len(args.ckpt):
        raise ValueError(f"{len(names)} --name value(s) for {len(args.ckpt)} checkpoint(s)")
    manifest = load_manifest(args.manifest)
    avg = [s.strip() for s in args.avg_sources.split(",") if s.strip()] if args.avg_sources else None
    denoiser = DenoiserSpec.parse(args.denoiser)
    rows = {}
    for i, path in enumerate(args.ckpt):
        model = NasaSwin.from_state(checkpoint.load(path))
        metrics = evaluate(model, manifest, denoiser, avg, use_branch=not args.no_branch)
        label = names[i] if names else Path(path).stem
        rows[label] = metrics
        if args.csv:
            target = Path(args.csv)
            if len(args.ckpt) > 1:
                target = target.with_name(f"{target.stem}_{label}{target.suffix}")
            write_metrics_csv(target, metrics)
    print(format_table(rows, style=args.table_format), end="")
    return 0


def _cmd_analyze(args) -> int:
    manifest = load_manifest(args.manifest)
    result = analyze(manifest, DenoiserSpec.parse(args.denoiser), args.out, size=args.size,
                     period=args.period, heatmap_format=args.format)
    for name, a in result.sources.items():
        print(f"{name}: {a.stats.count} images, peak contrast {a.contrast:.3f}")
    if result.skipped:
        print(f"skipped {result.skipped} unreadable file(s)")
    return 0


def _cmd_synth(args) -> int:
    written = synth(args.out, args.n, args.seed, size=args.size, amplitude=args.amplitude / 255.0, period=args.period)
    for split, path in written.items():
        print(f"{split}: {path}")
    return 0


def _cmd_selftest(args) -> int:
    return selftest.main()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nasaswin", description="Dual-branch window transformer for spotting generated images. " + THREADS_NOTE)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train from a manifest")
    p.add_argument("--config", help="key=value config file (model and training keys)")
    p.add_argument("--manifest", required=True, help="CSV with header path,label,source[,split]")
    p.add_argument("--out", required=True, help="output directory for checkpoints and loss_curve.csv")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--steps", type=int, help="override max_steps")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="accuracy per source and Avg-Acc",
                       description="A sample is predicted generated iff p(generated) > 0.5; a probability of exactly 0.5 counts as genuine.")
    p.add_argument("--ckpt", required=True, action="append", help="checkpoint; repeat to tabulate several methods")
    p.add_argument("--manifest", required=True)
    p.add_argument("--csv", help="write per-source metrics here (suffixed by method name when several checkpoints)")
    p.add_argument("--avg-sources", help="comma-separated sources averaged into Avg-Acc (default: all)")
    p.add_argument("--denoiser", default="median:3", help="median:K, gaussian:SIGMA or external:DIR")
    p.add_argument("--name", action="append", help="row label per checkpoint (default: file stem)")
    p.add_argument("--table-format", choices=("text", "csv"), default="text")
    p.add_argument("--no-branch", action="store_true", help="bypass the noise branch")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("analyze", help="mean residual and spectrum per source")
    p.add_argument("--manifest", required=True)
    p.add_argument("--denoiser", default="median:3")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, help="center-crop and resize to this side first")
    p.add_argument("--period", type=int, default=4, help="comb period probed by the peak contrast")
    p.add_argument("--format", choices=("pgm", "png"), default="pgm")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("synth", help="write the synthetic grid corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=128, help="images per split")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--amplitude", type=float, default=9.0, help="grid amplitude in 8-bit levels")
    p.add_argument("--period", type=int, default=4)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("selftest", help="run the built-in oracle suites")
    p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (NasaSwinError, ValueError, OSError) as exc:
        print(f"nasaswin: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
