"""Command-line entry point: ``msdi {fetch,fit,index,compare,plotdata}``.

Exit codes: 0 success, 2 validation error, 3 fit failure, 4 I/O error,
5 model/series mismatch.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import load_config
from .errors import DataIOError, MSDIError

_CATEGORY = {2: "validation", 3: "fit", 4: "io", 5: "mismatch"}


def _global_flags(parser, default):
    parser.add_argument("--config", default=default, help="pipeline YAML document")
    parser.add_argument("--seed", type=int, default=default, help="override the configured seed")
    parser.add_argument("--output-dir", default=default, help="override the configured output directory")
    parser.add_argument("-v", "--verbose", action="store_true", default=default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msdi", description="Copula-based drought index pipeline")
    _global_flags(parser, None)
    shared = argparse.ArgumentParser(add_help=False)
    _global_flags(shared, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fetch", parents=[shared], help="download the configured remote series to series.csv")
    sub.add_parser("fit", parents=[shared], help="fit marginals and copulas, write model.json and fit_report.txt")
    sub.add_parser("index", parents=[shared], help="compute classified MSDI and SPI series per window")
    cmp_ = sub.add_parser("compare", parents=[shared], help="event detection table, MSDI vs SPI")
    cmp_.add_argument("--events", help="CSV with name,start,end (defaults to the bundled NC list)")
    sub.add_parser("plotdata", parents=[shared], help="long-format plot table of all index series")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if not args.config:
            raise DataIOError("--config is required")
        config = load_config(args.config, seed=args.seed, output_dir=args.output_dir)
        if args.command == "fetch":
            out = pipeline.cmd_fetch(config)
        elif args.command == "fit":
            out = pipeline.cmd_fit(config)
        elif args.command == "index":
            out = pipeline.cmd_index(config)
        elif args.command == "compare":
            out, reports = pipeline.cmd_compare(config, args.events)
            for rep in reports:
                flag = "" if rep.msdi_detections >= rep.spi_detections else "  (MSDI below SPI)"
                print(f"window {rep.window:>2}: MSDI {rep.msdi_detections}  SPI {rep.spi_detections}{flag}")
        else:
            out = pipeline.cmd_plotdata(config)
    except MSDIError as exc:
        print(f"error[{_CATEGORY.get(exc.exit_code, 'error')}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 4
    if isinstance(out, list):
        for p in out:
            print(p)
    else:
        print(out)
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
