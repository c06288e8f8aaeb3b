"""Command-line entry point: ``lakeice <command> --config <path> ...``."""

from __future__ import annotations

import argparse
import sys
import warnings
from datetime import date
from pathlib import Path

from .exceptions import LakeIceError
from .pipeline import COMMANDS, load_config, run_pipeline


def _date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lakeice", description="Lake ice detection and phenology pipeline.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    p.add_argument("--lake", help="restrict to one lake id")
    p.add_argument("--from", dest="date_from", type=_date, help="first day (YYYY-MM-DD)")
    p.add_argument("--to", dest="date_to", type=_date, help="last day (YYYY-MM-DD)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            cfg = load_config(args.config, seed=args.seed, lake=args.lake,
                              date_from=args.date_from, date_to=args.date_to)
            manifest = run_pipeline(cfg, args.command, args.out)
        except LakeIceError as exc:
            code = exc.exit_code
            print(f"lakeice: error: {exc}", file=sys.stderr)
        else:
            code = 0
            print(f"{args.command}: artifacts listed in {manifest}")
        finally:
            for w in caught:
                print(f"lakeice: warning: {w.message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
