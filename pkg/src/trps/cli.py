"""Command line entry point.

    trps run <preset|config> [--out DIR] [--set section.key=value]...
    trps list-presets
    trps validate <config> [--set ...]

Exit codes: 0 success, 2 configuration error, 3 numerical invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import PRESETS, dumps, load_config
from .errors import ConfigError, GridTooNarrow, StepTooLarge, TrajectoryTooCoarse, TrpsError
from .pipeline import run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
# numerical errors that a different grid or step in the config would fix
_CONFIG_LIKE = (ConfigError, StepTooLarge, TrajectoryTooCoarse, GridTooNarrow)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trps", description="Time-resolved physical spectrum of a cavity-coupled emitter.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a preset or config file")
    run.add_argument("source", help="preset name or path to a config file")
    run.add_argument("--out", default="out", help="output root directory (default: out)")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    run.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("list-presets", help="print the preset names")
    val = sub.add_parser("validate", help="check a config and print it with defaults resolved")
    val.add_argument("source")
    val.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-presets":
        for name in PRESETS:
            print(name)
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.source, args.overrides)
        if args.command == "validate":
            sys.stdout.write(dumps(cfg))
            return EXIT_OK
        manifest = run_scenario(cfg, args.out)
    except _CONFIG_LIKE as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrpsError, ValueError) as exc:
        scenario = getattr(locals().get("cfg"), "name", args.source)
        print(f"{scenario}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(exc, TrpsError) else EXIT_CONFIG
    for f in manifest.files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
