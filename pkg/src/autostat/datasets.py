"""Loading series from CSV and generating synthetic benchmark series."""

from __future__ import annotations

import csv
import math
import os
from pathlib import Path
from typing import Callable

import numpy as np

from .gp import Dataset


class DataError(ValueError):
    """Input file that cannot be turned into a dataset."""


def _is_number(cell: str) -> bool:
    try:
        return math.isfinite(float(cell))
    except ValueError:
        return False


def _resolve(selector, header: list[str] | None, width: int, what: str) -> int:
    if isinstance(selector, str) and not selector.lstrip("-").isdigit():
        if header is None or selector not in header:
            raise DataError(f"{what} column {selector!r} not found in header {header}")
        return header.index(selector)
    idx = int(selector)
    if not 0 <= idx < width:
        raise DataError(f"{what} column {idx} out of range for {width} columns")
    return idx


def ingest_csv(path: "str | os.PathLike", x_col: "int | str" = 0, y_col: "int | str" = 1,
               x_unit: str = "", y_unit: str = "", name: str | None = None) -> Dataset:
    """Read two numeric columns from a CSV file.

    Columns are chosen by 0-based index or by header name.  A first row
    without any numeric cell is taken as the header.  Blank lines and lines
    starting with ``#`` are ignored.  Any other row with a non-numeric
    selected cell is an error, reported with its 1-based line number.  The
    result is sorted by x; duplicate x values are kept.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    DataError
        On unparseable rows, bad selectors, or fewer than two rows.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        rows = [(i, [c.strip() for c in row]) for i, row in enumerate(csv.reader(fh), 1)]
    rows = [(i, r) for i, r in rows if any(r) and not r[0].startswith("#")]
    if not rows:
        raise DataError(f"{path}: no data rows")

    header = None
    first = rows[0][1]
    width = len(first)
    if not any(_is_number(c) for c in first):
        header = first
        rows = rows[1:]
    xi = _resolve(x_col, header, width, "x")
    yi = _resolve(y_col, header, width, "y")

    xs, ys, bad = [], [], []
    for line, row in rows:
        if max(xi, yi) >= len(row) or not (_is_number(row[xi]) and _is_number(row[yi])):
            bad.append(line)
            continue
        xs.append(float(row[xi]))
        ys.append(float(row[yi]))
    if bad:
        shown = ", ".join(map(str, bad[:10])) + (" ..." if len(bad) > 10 else "")
        raise DataError(f"{path}: non-numeric value on line {shown}")
    if len(xs) < 2:
        raise DataError(f"{path}: need at least two numeric rows, found {len(xs)}")
    xs, ys = np.array(xs), np.array(ys)
    order = np.argsort(xs, kind="stable")
    return Dataset(xs[order], ys[order], x_unit, y_unit, name or path.stem)


def write_csv(data: Dataset, path: "str | os.PathLike") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y"])
        for x, y in zip(data.xs, data.ys):
            w.writerow([repr(float(x)), repr(float(y))])


def load_csv_dir(directory: "str | os.PathLike", **kwargs) -> list[Dataset]:
    """Every ``*.csv`` in ``directory``, in file-name order."""
    directory = Path(directory)
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise DataError(f"{directory}: no CSV files")
    return [ingest_csv(f, **kwargs) for f in files]


# ---------------------------------------------------------------------------
# synthetic series, each on x in [0, 10]


def _grid(n: int) -> np.ndarray:
    return np.linspace(0.0, 10.0, n)


def linear(n: int = 100, seed: int = 0) -> Dataset:
    x = _grid(n)
    e = np.random.default_rng(seed).standard_normal(n)
    return Dataset(x, 1.0 + 0.5 * x + 0.2 * e, name="linear")


def periodic(n: int = 100, seed: int = 0) -> Dataset:
    x = _grid(n)
    e = np.random.default_rng(seed).standard_normal(n)
    return Dataset(x, np.sin(2 * np.pi * x / 1.5) + 0.1 * e, name="periodic")


def periodic_growing(n: int = 100, seed: int = 0) -> Dataset:
    x = _grid(n)
    e = np.random.default_rng(seed).standard_normal(n)
    y = (0.2 + 0.2 * x) * np.sin(2 * np.pi * x / 1.5) + 0.1 * e
    return Dataset(x, y, name="periodic_growing")


def changepoint(n: int = 100, seed: int = 0) -> Dataset:
    x = _grid(n)
    e = np.random.default_rng(seed).standard_normal(n)
    y = np.where(x < 6.0, np.sin(1.5 * x), 2.0 + 0.3 * (x - 6.0)) + 0.1 * e
    return Dataset(x, y, name="changepoint")


def heteroscedastic(n: int = 100, seed: int = 0) -> Dataset:
    x = _grid(n)
    e = np.random.default_rng(seed).standard_normal(n)
    return Dataset(x, 0.3 * x + (0.05 + 0.08 * x) * e, name="heteroscedastic")


def smooth_trend(n: int = 100, seed: int = 0) -> Dataset:
    x = _grid(n)
    e = np.random.default_rng(seed).standard_normal(n)
    y = np.sin(0.7 * x) + 0.5 * np.cos(0.3 * x) + 0.05 * x ** 1.5 + 0.1 * e
    return Dataset(x, y, name="smooth_trend")


GENERATORS: dict[str, Callable[..., Dataset]] = {
    "linear": linear,
    "periodic": periodic,
    "periodic_growing": periodic_growing,
    "changepoint": changepoint,
    "heteroscedastic": heteroscedastic,
    "smooth_trend": smooth_trend,
}


def synthesize(name: str, n: int = 100, seed: int = 0) -> Dataset:
    key = name.strip().lower().replace("-", "_")
    if key not in GENERATORS:
        raise KeyError(f"unknown generator {name!r}; expected one of {sorted(GENERATORS)}")
    return GENERATORS[key](n=n, seed=seed)


def bundled_datasets(n: int = 100, seed: int = 0) -> list[Dataset]:
    """One series from each generator, in registry order."""
    return [gen(n=n, seed=seed) for gen in GENERATORS.values()]
