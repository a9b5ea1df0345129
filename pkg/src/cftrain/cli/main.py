"""Command-line entry point: ``cftrain --config experiment.toml``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import ConfigurationError
from ..training import Objective
from .config import ExperimentConfig, dump_config, parse_config
from .experiment import run_experiment, write_error


def _objectives(text: str) -> list[str]:
    names = [t.strip() for t in text.split(",") if t.strip()]
    valid = {o.value for o in Objective}
    bad = [n for n in names if n not in valid]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"expected a comma list of {sorted(valid)}, got {text!r}")
    return names


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cftrain", description="Train and evaluate counterfactually trained classifiers.")
    p.add_argument("--config", required=True, type=Path, help="experiment configuration file")
    p.add_argument("--seed", type=int, default=None, help="global seed (overrides the config and CT_SEED)")
    p.add_argument("--out-dir", type=Path, default=None, help="output directory (overrides [output] dir)")
    p.add_argument("--dry-run", action="store_true", help="validate and print the resolved config, write nothing")
    p.add_argument("--objectives", type=_objectives, default=None,
                   help="comma-separated subset of the configured objectives")
    p.add_argument("--quiet", action="store_true", help="suppress progress messages")
    return p


def load_config(path: Path) -> ExperimentConfig:
    cfg = parse_config(path.read_text(encoding="utf-8"))
    data_path = cfg.data["path"]
    # relative data paths are taken from the config file's directory
    if data_path and not Path(data_path).is_absolute():
        cfg.data["path"] = str((path.parent / data_path).resolve())
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.objectives is not None:
            extra = sorted(set(args.objectives) - {o.value for o in cfg.objectives})
            if extra:
                raise ConfigurationError(f"--objectives names variants not in the config: {extra}")
            args.objectives = [o.value for o in cfg.objectives if o.value in args.objectives]
        seed = cfg.resolved_seed(args.seed)
    except (ValueError, OSError) as err:
        write_error(None if args.dry_run else args.out_dir, err)
        return 2
    if args.dry_run:
        cfg.sections[""]["seed"] = seed
        if args.objectives is not None:
            cfg.sections["training"]["objectives"] = args.objectives
        if args.out_dir is not None:
            cfg.sections["output"]["dir"] = str(args.out_dir)
        sys.stdout.write(dump_config(cfg))
        return 0
    log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr, flush=True))
    return run_experiment(cfg, args.out_dir, seed, args.objectives, log)


if __name__ == "__main__":
    raise SystemExit(main())
