"""Command line entry point: ``nnhm analyze | simulate | priors | version``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .bayesian import DEFAULT_GRID_SIZE, HalfNormalPrior, prior_quantiles
from .report import (
    DEFAULT_METHODS,
    EXAMPLES,
    FORMATS,
    SCALES,
    AnalysisRequest,
    ForestPlotSpec,
    analyze,
    example_path,
    parse_dataset,
    render_forest,
    simulate_cmd,
    zero_fraction_pivot,
)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nnhm", description="Random-effects meta-analysis of few studies.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="pooled estimates for a dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("data", nargs="?", type=Path, help="dataset CSV file")
    src.add_argument("--example", choices=sorted(EXAMPLES), help="use a bundled example")
    p.add_argument("--format", choices=FORMATS, help="input format (default: from the file suffix)")
    p.add_argument("--methods", nargs="+", default=list(DEFAULT_METHODS), metavar="METHOD")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--scale", choices=SCALES, default="OR")
    p.add_argument("--grid-size", type=int, default=DEFAULT_GRID_SIZE)
    p.add_argument("--forest", type=Path, help="write a forest plot SVG here")
    p.add_argument("--csv", type=Path, help="write the full-precision report here")

    p = sub.add_parser("simulate", help="run a simulation grid from a JSON config")
    p.add_argument("config", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--workers", type=int, help="worker processes (overrides the config)")

    p = sub.add_parser("priors", help="median and 95%% interval of half-normal priors")
    p.add_argument("scales", nargs="*", type=float, default=[0.5, 1.0])

    sub.add_parser("version", help="print the package version")
    return parser


def _analyze(args) -> int:
    path = example_path(args.example) if args.example else args.data
    data = parse_dataset(path, args.format)
    req = AnalysisRequest(data, args.methods, args.level, args.scale, args.grid_size)
    report = analyze(req)
    print(report.to_text())
    if args.csv:
        args.csv.write_text(report.to_csv(), encoding="utf-8")
    if args.forest:
        render_forest(ForestPlotSpec.from_report(report, title=args.example or path.stem), args.forest)
    return EXIT_OK


def _simulate(args) -> int:
    results = simulate_cmd(args.config, args.out, args.workers)
    failed = [r for r in results if not r.ok]
    taus, rows = zero_fraction_pivot([r for r in results if r.ok])
    print("zero DL estimates (%)")
    print("n1/n2      " + "".join(f"{t:>8g}" for t in taus))
    for label, *cells in rows:
        print(f"{label:<11}" + "".join(f"{c:8.1f}" for c in cells))
    for r in failed:
        print(f"scenario {r.scenario.n1}/{r.scenario.n2} tau={r.scenario.tau} failed: {r.error}", file=sys.stderr)
    return EXIT_NUMERIC if failed else EXIT_OK


def _priors(args) -> int:
    print(f"{'prior':<10}{'median':>8}  95%-interval")
    for scale in args.scales:
        med, lo, hi = prior_quantiles(HalfNormalPrior(scale))
        name = HalfNormalPrior(scale).label.removeprefix("Bayes-")
        print(f"{name:<10}{med:>8.3g}  ({lo:.3g}, {hi:.3g})")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    handlers = {"analyze": _analyze, "simulate": _simulate, "priors": _priors}
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    try:
        return handlers[args.command](args)
    except ArithmeticError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
