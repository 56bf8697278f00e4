"""
Command line entry point: python -m src.cli <command> ...

Exit codes: 0 success, 1 partial failure / failed verification / diverged training,
2 usage, configuration or input errors.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from src.checkpoint import load_checkpoint
from src.config import ADVGAN_RUNS_DIR, ADVGAN_WORKERS, RunConfig, load_config_file, resolve_run_config, setup_logging
from src.data import load_corpus, make_toy_corpora, save_corpus
from src.errors import (
    AudioFormatError,
    ConfigError,
    CorpusError,
    DimensionError,
    FormatError,
    TrainingDivergedError,
)
from src.features import apply_norm, read_gram, write_gram
from src.networks import NetScale, parameter_report
from src.storage import write_atomic

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2

RESOLVED_CONFIG_FILE = "config.resolved"
INPUT_ERRORS = (ConfigError, FormatError, CorpusError, AudioFormatError, DimensionError, OSError)

# CLI flag -> config key
TRAIN_FLAGS = {
    "variant": "variant",
    "eta_gen": "eta_gen",
    "eta_dis": "eta_dis",
    "rho": "rho_gen",
    "lambda_c": "lambda_c",
    "lambda_e": "lambda_e",
    "lr_g": "lr_g",
    "lr_d": "lr_d",
    "batch_size": "batch_size",
    "iterations": "iterations",
    "seed": "seed",
    "width_mult": "width_mult",
    "patch_frames": "patch_frames",
    "norm_scope": "norm_scope",
    "checkpoint_every": "checkpoint_every",
    "log_every": "log_every",
    "x": "x",
    "y": "y",
    "out": "out",
}


def _resolve(args: argparse.Namespace, flags: Dict[str, str]) -> RunConfig:
    values = load_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = {key: getattr(args, flag, None) for flag, key in flags.items()}
    return resolve_run_config(values, overrides)


def _log_resolved(run: RunConfig) -> List[str]:
    lines = run.lines()
    for line in lines:
        logger.info(f"[CLI] {line}")
    return lines


# =========================
# COMMANDS
# =========================


def cmd_extract(args: argparse.Namespace) -> int:
    from src.data import ingest

    corpus = ingest(args.input, args.out, workers=args.workers)
    for entry in corpus.failures:
        print(f"{entry.path}\t{entry.status}", file=sys.stderr)
    print(f"extracted {len(corpus)} of {len(corpus.manifest)} files into {args.out}")
    return EXIT_PARTIAL if corpus.failures else EXIT_OK


def cmd_synthgen(args: argparse.Namespace) -> int:
    run = _resolve(args, {"seed": "seed"})
    out = Path(args.out)
    corpus_x, corpus_y = make_toy_corpora(run.train.seed, run.toy_x, run.toy_y, patches=run.toy_patches)
    save_corpus(corpus_x, out / "x")
    save_corpus(corpus_y, out / "y")
    print(f"wrote {len(corpus_x)} + {len(corpus_y)} toy patches to {out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    from src.trainer import train

    run = _resolve(args, TRAIN_FLAGS)
    if "x" not in run.paths or "y" not in run.paths:
        raise ConfigError("train needs corpus directories for both domains (--x and --y)")
    run_dir = Path(run.paths.get("out") or ADVGAN_RUNS_DIR / run.train.variant)
    lines = _log_resolved(run)

    resume = None
    if args.resume:
        resume = load_checkpoint(args.resume, scale=NetScale.from_config(run.train))
    corpus_x = load_corpus(run.paths["x"])
    corpus_y = load_corpus(run.paths["y"])
    write_atomic(run_dir / RESOLVED_CONFIG_FILE, ("\n".join(lines) + "\n").encode("utf-8"))

    result = train(run.train, corpus_x, corpus_y, run_dir=run_dir, resume=resume)
    print(f"trained {result.state.iteration} iterations; run directory {run_dir}")
    return EXIT_OK


def cmd_convert(args: argparse.Namespace) -> int:
    from src.trainer import convert, source_stats

    state = load_checkpoint(args.ckpt)
    source = Path(args.input)
    if source.suffix.lower() == ".wav":
        from src.pipeline import run_conversion

        final = run_conversion(state, str(source), args.out, args.direction)
        if final.get("error"):
            print(final["error"], file=sys.stderr)
            return EXIT_USAGE
        print(f"wrote {final['written']}")
        return EXIT_OK

    gram = read_gram(source)
    converted = convert(state, apply_norm(gram, source_stats(state, args.direction)), args.direction)
    write_gram(args.out, converted)
    print(f"wrote {args.out} ({converted.bins} bins x {converted.frames} frames)")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    from src import verify

    if args.suite == "toyeval":
        if not args.ckpt:
            raise ConfigError("toyeval needs --ckpt")
        run = _resolve(args, {})
        state = load_checkpoint(args.ckpt)
        result = verify.run_toyeval(state, seed=state.config.seed, spec_x=run.toy_x, spec_y=run.toy_y)
    elif args.suite == "gradcheck":
        result = verify.run_gradcheck(seed=args.seed)
    else:
        result = verify.run_invariants(seed=args.seed)
    print(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK if result.passed else EXIT_PARTIAL


def cmd_params(args: argparse.Namespace) -> int:
    report = parameter_report(NetScale(width_mult=args.width_mult))
    for key, value in report.items():
        print(f"{key}={value:.4f}" if isinstance(value, float) else f"{key}={value}")
    return EXIT_OK


# =========================
# PARSER
# =========================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m src.cli", description="cycleGAN spectral-envelope voice conversion")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract envelope grams from a WAV directory")
    p.add_argument("--in", dest="input", required=True, help="directory of 16 kHz mono PCM16 WAV files")
    p.add_argument("--out", required=True, help="corpus directory to write")
    p.add_argument("--workers", type=int, default=ADVGAN_WORKERS, help="extraction threads")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("synthgen", help="write the synthetic toy corpora X and Y")
    p.add_argument("--out", required=True, help="output directory (x/ and y/ are created)")
    p.add_argument("--seed", type=int, default=None, help="generation seed (default 0)")
    p.add_argument("--config", default=None, help="key=value config file (toy_* keys)")
    p.set_defaults(func=cmd_synthgen)

    p = sub.add_parser("train", help="train the four networks")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--x", default=None, help="corpus directory of domain X")
    p.add_argument("--y", default=None, help="corpus directory of domain Y")
    p.add_argument("--out", default=None, help="run directory")
    p.add_argument("--variant", choices=["vanilla", "wegan", "gewegan", "gimgan", "gewegimgan"], default=None)
    p.add_argument("--eta-gen", dest="eta_gen", type=float, default=None)
    p.add_argument("--eta-dis", dest="eta_dis", type=float, default=None)
    p.add_argument("--rho", type=float, default=None, help="rho_gen of the soft label")
    p.add_argument("--lambda-c", dest="lambda_c", type=float, default=None)
    p.add_argument("--lambda-e", dest="lambda_e", type=float, default=None)
    p.add_argument("--lr-g", dest="lr_g", type=float, default=None)
    p.add_argument("--lr-d", dest="lr_d", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--width-mult", dest="width_mult", type=float, default=None)
    p.add_argument("--patch-frames", dest="patch_frames", type=int, default=None)
    p.add_argument("--norm-scope", dest="norm_scope", choices=["pooled", "domain"], default=None)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=None)
    p.add_argument("--log-every", dest="log_every", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("convert", help="convert a gram or WAV file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True, help=".egrm gram or .wav file")
    p.add_argument("--direction", choices=["xy", "yx"], required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("verify", help="run an acceptance suite")
    p.add_argument("--suite", choices=["gradcheck", "invariants", "toyeval"], required=True)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--config", default=None, help="key=value config file (toy_* keys for toyeval)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("params", help="print parameter counts")
    p.add_argument("--width-mult", dest="width_mult", type=float, default=1.0)
    p.set_defaults(func=cmd_params)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    setup_logging()
    try:
        return args.func(args)
    except TrainingDivergedError as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return EXIT_PARTIAL
    except INPUT_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
