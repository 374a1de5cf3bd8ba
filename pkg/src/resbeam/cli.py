"""Command line front end.

    resbeam run <config> [--out DIR] [--seed N] [--workers K] [--dry-run]
    resbeam validate <config>

``<config>`` is a TOML file path or the name of a bundled reference config
(``fig5``, ``fig7``, ``fig9``, ``fig10``, ``fig11``, ``fig12``, ``fig13a``,
``fig13b``, ``fig14a``, ``fig14b``).
"""
from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from .config import ConfigError, ExperimentConfig, parse_config
from .runner import EXIT_CONFIG, EXIT_INTERNAL, EXIT_IO, EXIT_OK, execute


def bundled_configs() -> list[str]:
    root = resources.files("resbeam") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def read_config_text(ref: str) -> str:
    path = Path(ref)
    if path.exists():
        return path.read_text(encoding="utf-8")
    if ref in bundled_configs():
        return (resources.files("resbeam") / "configs" / f"{ref}.toml").read_text(encoding="utf-8")
    raise FileNotFoundError(f"no such config file or bundled config: {ref}")


def load(ref: str) -> ExperimentConfig:
    return parse_config(read_config_text(ref))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="resbeam", description="Resonant-beam passive positioning experiments")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", help="config path or bundled config name")
    run.add_argument("--out", help="output directory (overrides [output].dir)")
    run.add_argument("--seed", type=int, help="master seed (overrides [experiment].seed)")
    run.add_argument("--workers", type=int, default=1, help="worker processes")
    run.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")

    val = sub.add_parser("validate", help="parse and validate a config")
    val.add_argument("config", help="config path or bundled config name")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

    if args.command == "validate":
        mode = f"sweep over {', '.join(cfg.sweep)} ({len(cfg.points())} scenarios)" if cfg.is_sweep else "single run"
        print(f"{args.config}: ok ({cfg.kind}, {mode})")
        return EXIT_OK

    if args.seed is not None:
        if args.seed < 0:
            print("error: --seed must be non-negative", file=sys.stderr)
            return EXIT_CONFIG
        cfg = cfg.with_overrides(seed=args.seed)
    try:
        return execute(cfg, out=args.out, workers=args.workers, dry_run=args.dry_run)
    except Exception as exc:  # last resort: report instead of a traceback
        print(f"error: internal failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
