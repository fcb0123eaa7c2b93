"""``stein-lab <subcommand> --config FILE [--out DIR] [--seed U64] [--threads N]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from ..errors import ConfigError, NumericalError
from .config import load_config, validate
from .experiments import RUNNERS
from .io import dumps

log = logging.getLogger("steinlab")

# audit re-reads the outputs of a sweep, so it accepts that sweep's config
_AUDITABLE = ("simulate", "stability-sweep")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stein-lab", description="SVGD particle experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML experiment file")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
        p.add_argument("--threads", type=int, default=None, help="threads for the pairwise loop")
        if name == "bayes-demo":
            p.add_argument("--data", help="data file (overrides bayes.data_file)")
    return parser


def _prepare(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = validate(dataclasses.replace(cfg, seed=args.seed))
    if args.command == "audit":
        if cfg.kind not in _AUDITABLE:
            raise ConfigError(f"audit needs a {' or '.join(_AUDITABLE)} config, got {cfg.kind!r}")
    elif cfg.kind != args.command:
        raise ConfigError(f"config kind {cfg.kind!r} does not match subcommand {args.command!r}")
    if args.threads is not None and args.threads < 1:
        raise ConfigError("--threads must be positive")
    out = Path(args.out) if args.out else cfg.resolve(cfg.out)
    return cfg, out


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg, out = _prepare(args)
        out.mkdir(parents=True, exist_ok=True)
        kwargs = {"threads": args.threads}
        if args.command == "bayes-demo" and args.data:
            kwargs["data_file"] = str(Path(args.data).resolve())
        result = RUNNERS[args.command](cfg, out, **kwargs)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    except ValueError as exc:
        # out-of-range settings caught below the config layer (dt stride, CFL, ...)
        log.error("config error: %s", exc)
        return 2
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return 3
    print(dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
