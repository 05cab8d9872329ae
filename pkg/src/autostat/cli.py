"""Command-line entry point.

Subcommands::

    autostat analyse --input series.csv --out report/
    autostat benchmark [--input DIR] --out results/
    autostat describe "PER * LIN * SIG(1700, 1)"
    autostat synth periodic --out periodic.csv

Options may also come from a ``key=value`` file given with ``--config``;
flags on the command line win.  ``AUTOSTAT_LOG`` sets the log level
(DEBUG, INFO, WARNING, ERROR; default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from ._runtime import tune_allocator
from .datasets import GENERATORS, DataError, bundled_datasets, ingest_csv, load_csv_dir, \
    synthesize, write_csv
from .describe import describe_components, describe_kernel
from .evaluation import DEFAULT_PRESETS, SPLITS, preset_medians, run_benchmark, write_tables
from .gp import OptimizationError
from .kernels import KernelSyntaxError
from .report import render_report
from .search import Language, SearchConfig, greedy_search

log = logging.getLogger("autostat")


class ConfigError(ValueError):
    pass


def read_config(path) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for i, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{i}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def _positive(text) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _flag(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _search_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--depth", type=_positive, default=10,
                   help="maximum search depth (default: %(default)s)")
    p.add_argument("--restarts", type=_positive, default=10,
                   help="random restarts per candidate fit (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for all randomness (default: %(default)s)")
    p.add_argument("--interpretable", type=_flag, nargs="?", const=True, default=False,
                   help="distribute products over sums during search (default: off)")
    p.add_argument("--jobs", type=_positive, default=1,
                   help="worker processes (default: %(default)s)")
    p.add_argument("--config", help="key=value file with defaults for these options")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autostat",
        description="Gaussian-process kernel search with plain-language reports.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyse", aliases=["analyze"], help="search a model and write a report",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    a.add_argument("--input", required=True, help="CSV file with the series")
    a.add_argument("--x-col", default="0", help="x column, 0-based index or header name")
    a.add_argument("--y-col", default="1", help="y column, 0-based index or header name")
    a.add_argument("--x-unit", default="", help="unit of x used in the text, e.g. year")
    a.add_argument("--y-unit", default="", help="unit of y used in the text")
    a.add_argument("--language", default="FULL",
                   help="grammar preset: " + ", ".join(m.value for m in Language))
    a.add_argument("--out", default="report", help="output directory")
    _search_options(a)

    b = sub.add_parser("benchmark", help="compare presets on held-out data",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    b.add_argument("--input", help="directory of CSV files; bundled synthetic series if omitted")
    b.add_argument("--x-col", default="0", help="x column in every file")
    b.add_argument("--y-col", default="1", help="y column in every file")
    b.add_argument("--presets", default=",".join(DEFAULT_PRESETS),
                   help="comma-separated presets")
    b.add_argument("--split", default="both", choices=[*SPLITS, "both"],
                   help="held-out protocol")
    b.add_argument("--n", type=_positive, default=100, help="points per synthetic series")
    b.add_argument("--out", default="benchmark", help="output directory")
    _search_options(b)

    d = sub.add_parser("describe", help="describe a kernel expression in words")
    d.add_argument("kernel", help='kernel expression, e.g. "PER * LIN * SIG(1700, 1)"')

    s = sub.add_parser("synth", help="write a synthetic series as CSV",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    s.add_argument("generator", choices=sorted(GENERATORS))
    s.add_argument("--n", type=_positive, default=100, help="number of points")
    s.add_argument("--seed", type=int, default=0, help="noise seed")
    s.add_argument("--out", help="output file (default: standard output)")
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    """Parse ``argv``, letting a ``--config`` file supply defaults."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(values) - known - {"config"})
        if unknown:
            raise ConfigError(f"{args.config}: unknown keys {unknown}")
        sub.set_defaults(**values)  # string defaults go through each option's type
        args = parser.parse_args(argv)
    return args


def _configure_logging() -> None:
    level = os.environ.get("AUTOSTAT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _column(sel: str):
    return int(sel) if sel.lstrip("-").isdigit() else sel


def cmd_analyse(args) -> int:
    data = ingest_csv(args.input, _column(args.x_col), _column(args.y_col),
                      args.x_unit, args.y_unit)
    config = SearchConfig(max_depth=args.depth, restarts=args.restarts, rng_seed=args.seed,
                          language=args.language, interpretable=args.interpretable,
                          jobs=args.jobs)
    model, trace = greedy_search(data, config)
    descriptions = describe_components(model.kernel, data)
    render_report(model, data, descriptions, out_dir=args.out, trace=trace)
    print(f"Model: {model.kernel}")
    print(f"BIC: {model.bic:.4f}")
    for rank, d in enumerate(descriptions, 1):
        print(f"{rank}. {d.summary}")
    print(f"Report written to {Path(args.out) / 'report.md'}")
    return 0


def cmd_benchmark(args) -> int:
    if args.input:
        datasets = load_csv_dir(args.input, x_col=_column(args.x_col), y_col=_column(args.y_col))
    else:
        datasets = bundled_datasets(n=args.n, seed=args.seed)
    presets = [p for p in args.presets.split(",") if p.strip()]
    config = SearchConfig(max_depth=args.depth, restarts=args.restarts, rng_seed=args.seed,
                          interpretable=args.interpretable)
    splits = SPLITS if args.split == "both" else (args.split,)
    any_ok = False
    for kind in splits:
        results = run_benchmark(datasets, presets, kind, config, jobs=args.jobs)
        write_tables(results, args.out, kind)
        ok = [r for r in results if not r.failed]
        any_ok = any_ok or bool(ok)
        print(f"{kind}: {len(ok)}/{len(results)} cells succeeded")
        for preset, med in preset_medians(results).items():
            print(f"  {preset:<20} median standardised RMSE {med:.4f}")
        for r in results:
            if r.failed:
                print(f"  FAILED {r.dataset}/{r.preset}: {r.error}")
    if not any_ok:
        print("error: every benchmark cell failed", file=sys.stderr)
        return 1
    return 0


def cmd_describe(args) -> int:
    for phrase in describe_kernel(args.kernel):
        print(phrase)
    return 0


def cmd_synth(args) -> int:
    data = synthesize(args.generator, n=args.n, seed=args.seed)
    if args.out:
        write_csv(data, args.out)
    else:
        print("x,y")
        for x, y in zip(data.xs, data.ys):
            print(f"{float(x)!r},{float(y)!r}")
    return 0


COMMANDS = {"analyse": cmd_analyse, "analyze": cmd_analyse, "benchmark": cmd_benchmark,
            "describe": cmd_describe, "synth": cmd_synth}


def main(argv=None) -> int:
    _configure_logging()
    tune_allocator()
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except (ConfigError, DataError, FileNotFoundError, KernelSyntaxError,
            OptimizationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
