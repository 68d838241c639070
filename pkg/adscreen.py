#!/usr/bin/env python3
"""
adscreen: audio + transcript screening pipeline.

    adscreen.py synth --n-subjects 80 --out corpus/
    adscreen.py evaluate --manifest corpus/manifest.csv --out runs/eval
    adscreen.py fuse --predictions runs/a/predictions.csv --predictions runs/b/predictions.csv
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence

from dotenv import load_dotenv

from core.config import CHOICES, RunConfig
from core.errors import ConfigError, ManifestError, ScreeningError, UsageError
from core.log import setup_logging
from pipeline import commands

logger = logging.getLogger("adscreen")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adscreen", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("command", choices=commands.COMMANDS)
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--manifest", help="subject manifest CSV")
    parser.add_argument("--out", dest="out_dir", help="run output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--jobs", type=int, help="worker count; 1 is fully serial")
    parser.add_argument("--segment", choices=CHOICES["segment"])
    parser.add_argument("--source", choices=CHOICES["source"])
    parser.add_argument("--weights", dest="fusion_weights", help="comma-separated fusion weights")
    parser.add_argument("--n-subjects", type=int, default=80, help="synth: number of subjects")
    parser.add_argument("--duration", dest="synth_duration", type=float, help="synth: seconds of audio per subject")
    parser.add_argument("--predictions", action="append", default=[], help="fuse: predictions CSV (repeatable)")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true")
    verbosity.add_argument("--quiet", "-q", action="store_true")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = {
        key: getattr(args, key)
        for key in ("manifest", "out_dir", "seed", "jobs", "segment", "source", "synth_duration")
    }
    if args.fusion_weights is not None:
        try:
            overrides["fusion_weights"] = tuple(float(w) for w in args.fusion_weights.split(",") if w.strip())
        except ValueError:
            raise ConfigError(f"--weights must be comma-separated numbers, got '{args.fusion_weights}'") from None
    return RunConfig.from_sources(args.config, overrides=overrides)


def run_command(command: str, cfg: RunConfig, args: argparse.Namespace | None = None) -> int:
    n_subjects = getattr(args, "n_subjects", 80)
    predictions = getattr(args, "predictions", [])
    runners = {
        "features": lambda: commands.cmd_features(cfg),
        "train-audio": lambda: commands.cmd_train_audio(cfg),
        "train-text": lambda: commands.cmd_train_text(cfg),
        "predict": lambda: commands.cmd_predict(cfg),
        "fuse": lambda: commands.cmd_fuse(cfg, predictions),
        "evaluate": lambda: commands.cmd_evaluate(cfg),
        "synth": lambda: commands.cmd_synth(cfg, n_subjects),
    }
    if command not in runners:
        raise UsageError(f"unknown command '{command}'")
    written = runners[command]()
    logger.info("%s: %d artifacts in %s", command, len(written), cfg.out_dir)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    setup_logging(level)
    try:
        cfg = resolve_config(args)
        setup_logging(level, log_file=f"{cfg.out_dir}/run.log")
        return run_command(args.command, cfg, args)
    except (UsageError, ConfigError, ManifestError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except ScreeningError as exc:
        logger.error("%s", exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
