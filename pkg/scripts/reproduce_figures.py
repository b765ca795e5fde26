"""Run every preset (or the named ones) into one output root and report timings.

    python3 scripts/reproduce_figures.py [--out out] [preset ...]
"""

import argparse
import logging
import time

from trps.config import PRESETS
from trps.pipeline import run_scenario

log = logging.getLogger("reproduce")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("presets", nargs="*", default=list(PRESETS))
    ap.add_argument("--out", default="out")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    for name in args.presets:
        start = time.perf_counter()
        manifest = run_scenario(PRESETS[name], args.out)
        log.info("%-18s %6.1f s  %3d files", name, time.perf_counter() - start, len(manifest.files))


if __name__ == "__main__":
    main()
