"""Batch CLI: a thin client over the runner.

Subcommands: analyze, simulate, lyapunov, audit. Each takes --config and
optional --seed / --out / --format overrides, writes report files, and
exits 0 on success, 1 on configuration errors, 2 on computational
failures; errors go to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import parse_config
from .errors import ComputationError, ConfigError
from .runner import COMMANDS, write_reports


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="critgrowth",
        description="Classify and simulate critical multidimensional "
                    "stochastic population models.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="path to the JSON run configuration")
    common.add_argument("--seed", type=int, default=None,
                        help="override the master seed from the config")
    common.add_argument("--out", default=None,
                        help="override the output directory")
    common.add_argument("--format", default=None,
                        choices=("json", "csv", "both"),
                        help="report format (default from config: json)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common],
                   help="Perron eigendata and growth classification")
    sub.add_parser("simulate", parents=[common],
                   help="trajectory ensemble and dichotomy probe")
    sub.add_parser("lyapunov", parents=[common],
                   help="supermartingale gaps and moment scan")
    sub.add_parser("audit", parents=[common],
                   help="assumption audit over the probe grid")
    return parser


def _error_json(kind: str, exc: Exception) -> str:
    payload = {"error": {"type": kind, "message": str(exc)}}
    path = getattr(exc, "path", None)
    if path:
        payload["error"]["path"] = path
    return json.dumps(payload)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, seed=args.seed, out_dir=args.out,
                           formats=args.format)
        envelope = COMMANDS[args.command](cfg)
        written = write_reports(args.command, envelope, cfg.out_dir,
                                cfg.formats)
    except ConfigError as exc:
        print(_error_json("config", exc), file=sys.stderr)
        return 1
    except ComputationError as exc:
        print(_error_json("computation", exc), file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
