"""Command-line entry point: ``lionk <command> --config FILE [--out DIR]``.

Exit status is 0 when every check passes, 1 when a check fails and 2 on a
configuration or IO error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .config import load_config
from .errors import ConfigError, LionKError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

COMMAND_MODE = {cmd: mode for mode, cmd in harness.MODE_COMMAND.items()}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lionk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, help="output directory (default: config's [run] out, else ./out)")
    common.add_argument("--quiet", action="store_true", help="print nothing on success")
    common.add_argument("--plot", action="store_true", help="also write PNG figures next to the CSVs")
    for name in (*harness.COMMANDS, "verify-all"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--config", type=Path, required=name != "verify-all")
        p.add_argument("--seed", type=int, help="override the oracle seed")
    return parser


def _out_dir(args, cfg) -> Path:
    if args.out is not None:
        return args.out
    if cfg is not None and cfg.out is not None:
        return cfg.out
    return Path("out")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    say = (lambda *a, **k: None) if args.quiet else print
    try:
        mode = COMMAND_MODE.get(args.command)
        cfg = load_config(args.config, mode) if args.config is not None else None
        if cfg is not None and args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        out = _out_dir(args, cfg)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "verify-all":
            report = harness.cmd_verify_all(out, log=say)
        else:
            report = harness.COMMANDS[args.command](cfg, out)
        if args.plot:
            from . import plotting

            report.files += plotting.render(report, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LionKError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if report.passed:
        say(report.render(), end="")
    else:
        print(report.render(), end="", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
