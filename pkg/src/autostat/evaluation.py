"""Forecasting and interpolation benchmarks across language presets.

Each (dataset, preset) cell fits on a training split, predicts the held-out
points and records the RMSE in output units.  Within a dataset row the RMSEs
are divided by the smallest successful one, so the best preset scores 1.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .gp import Dataset, Posterior
from .kernels import parse_kernel
from .search import Language, SearchConfig, greedy_search

log = logging.getLogger(__name__)

SPLITS = ("extrapolation", "interpolation")

# the full grammar searched with every product distributed over sums
FULL_INTERPRETABLE = "FULL_INTERPRETABLE"

DEFAULT_PRESETS = ("LINEAR", "SE_ONLY", "MKL", "TCI", "SPECTRAL", "CHANGEPOINT", "FULL",
                   FULL_INTERPRETABLE)


def split_extrapolation(data: Dataset) -> tuple[Dataset, Dataset]:
    """First ``ceil(0.9 n)`` points in x order for training, the rest for testing."""
    if data.n < 10:
        raise ValueError(f"extrapolation split needs at least 10 points, got {data.n}")
    order = np.argsort(data.xs, kind="stable")
    cut = math.ceil(0.9 * data.n)
    return data.subset(order[:cut]), data.subset(order[cut:])


def split_interpolation(data: Dataset, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Uniformly random halves; training receives ``ceil(n / 2)`` points.

    Both halves keep the original point order.
    """
    if data.n < 4:
        raise ValueError(f"interpolation split needs at least 4 points, got {data.n}")
    perm = np.random.default_rng(seed).permutation(data.n)
    cut = math.ceil(data.n / 2)
    return data.subset(np.sort(perm[:cut])), data.subset(np.sort(perm[cut:]))


def split(data: Dataset, kind: str, seed: int = 0) -> tuple[Dataset, Dataset]:
    if kind == "extrapolation":
        return split_extrapolation(data)
    if kind == "interpolation":
        return split_interpolation(data, seed)
    raise ValueError(f"unknown split {kind!r}; expected one of {SPLITS}")


def normalize_preset(name: str) -> str:
    key = str(name).strip().upper().replace("-", "_")
    if key in (FULL_INTERPRETABLE, "INTERPRETABLE"):
        return FULL_INTERPRETABLE
    return Language.parse(key).value


@dataclass(frozen=True)
class BenchmarkResult:
    """One cell of a benchmark table.

    ``rmse`` and ``standardised_rmse`` are NaN when the cell failed; ``error``
    then holds the reason.
    """

    dataset: str
    preset: str
    split: str
    rmse: float
    standardised_rmse: float = math.nan
    train_log_ml: float = math.nan
    train_bic: float = math.nan
    kernel: str = ""
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)


def rmse(pred, truth) -> float:
    pred, truth = np.asarray(pred, dtype=float), np.asarray(truth, dtype=float)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def standardise(results: Sequence[BenchmarkResult]) -> list[BenchmarkResult]:
    """Divide each cell's RMSE by the smallest successful RMSE of its row.

    Failed cells stay NaN and do not take part in the row minimum.
    """
    best: dict[tuple[str, str], float] = {}
    for r in results:
        if not r.failed:
            key = (r.dataset, r.split)
            best[key] = min(best.get(key, math.inf), r.rmse)
    out = []
    for r in results:
        if r.failed:
            out.append(r)
            continue
        lo = best[(r.dataset, r.split)]
        if lo > 0:
            s = r.rmse / lo
        else:
            s = 1.0 if r.rmse == 0 else math.inf
        if r.rmse == lo:
            s = 1.0  # exact, whatever the rounding of the division
        out.append(replace(r, standardised_rmse=s))
    return out


def _cell_config(preset: str, config: SearchConfig) -> SearchConfig:
    if preset == FULL_INTERPRETABLE:
        return replace(config, language=Language.FULL, interpretable=True, jobs=1)
    return replace(config, language=Language.parse(preset), interpretable=False, jobs=1)


def _run_cell(args) -> BenchmarkResult:
    data, preset, kind, config, extra = args
    try:
        train, test = split(data, kind, config.rng_seed)
        model, _ = greedy_search(train, _cell_config(preset, config), extra_candidates=extra)
        mean, _ = Posterior(model.kernel, train).predict(test.xs)
        return BenchmarkResult(data.name, preset, kind, rmse(mean, test.ys),
                               train_log_ml=model.log_ml, train_bic=model.bic,
                               kernel=str(model.kernel))
    except Exception as exc:  # a failed cell must not sink the whole table
        log.warning("benchmark cell %s/%s/%s failed: %s", data.name, preset, kind, exc)
        return BenchmarkResult(data.name, preset, kind, math.nan,
                               error=f"{type(exc).__name__}: {exc}")


def run_benchmark(datasets: Sequence[Dataset], presets: Iterable[str] = DEFAULT_PRESETS,
                  split_kind: str = "extrapolation", config: SearchConfig | None = None,
                  jobs: int = 1, inject: bool = True) -> list[BenchmarkResult]:
    """Fit every preset to every dataset and score held-out predictions.

    Parameters
    ----------
    datasets : sequence of Dataset
        Names must be unique; they label the table rows.
    presets : iterable of str
        Language names, plus ``"FULL_INTERPRETABLE"``.
    split_kind : {"extrapolation", "interpolation"}
    config : SearchConfig, optional
        Depth, restarts and seed shared by all cells; its language is ignored.
    jobs : int
        Worker processes over cells.
    inject : bool
        Offer the models chosen by the restricted presets to the full
        searches as extra depth-1 candidates, so the full grammar never
        ends with a worse training BIC than a language it contains.

    Returns
    -------
    list of BenchmarkResult
        Ordered by dataset, then preset, as given.
    """
    config = config or SearchConfig()
    presets = list(dict.fromkeys(normalize_preset(p) for p in presets))
    if split_kind not in SPLITS:
        raise ValueError(f"unknown split {split_kind!r}; expected one of {SPLITS}")
    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        raise ValueError(f"dataset names must be unique, got {names}")
    full = {"FULL", FULL_INTERPRETABLE}
    first = [(d, p) for d in datasets for p in presets if p not in full]
    second = [(d, p) for d in datasets for p in presets if p in full]

    def run(cells, extras):
        tasks = [(d, p, split_kind, config, extras.get(d.name, ())) for d, p in cells]
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(jobs) as pool:
                return list(pool.map(_run_cell, tasks))
        return [_run_cell(t) for t in tasks]

    done = {(r.dataset, r.preset): r for r in run(first, {})}
    extras: dict[str, tuple] = {}
    if inject:
        for d in datasets:
            extras[d.name] = tuple(parse_kernel(r.kernel) for (n, _), r in sorted(done.items())
                                   if n == d.name and not r.failed)
    done.update({(r.dataset, r.preset): r for r in run(second, extras)})
    ordered = [done[(d.name, p)] for d in datasets for p in presets]
    return standardise(ordered)


def results_table(results: Sequence[BenchmarkResult], value: str = "standardised_rmse") -> str:
    """CSV text with one row per dataset and one column per preset.

    Failed cells are written as ``FAILED``.
    """
    datasets = list(dict.fromkeys(r.dataset for r in results))
    presets = list(dict.fromkeys(r.preset for r in results))
    cells = {(r.dataset, r.preset): r for r in results}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", *presets])
    for d in datasets:
        row = [d]
        for p in presets:
            r = cells.get((d, p))
            if r is None:
                row.append("")
            elif r.failed:
                row.append("FAILED")
            else:
                row.append(f"{getattr(r, value):.6g}")
        w.writerow(row)
    return buf.getvalue()


def write_tables(results: Sequence[BenchmarkResult], out_dir: "str | os.PathLike",
                 split_kind: str) -> list[Path]:
    """Write ``<split>_rmse.csv`` and ``<split>_standardised_rmse.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for value in ("rmse", "standardised_rmse"):
        p = out / f"{split_kind}_{value}.csv"
        p.write_text(results_table(results, value), encoding="utf-8")
        paths.append(p)
    return paths


def preset_medians(results: Sequence[BenchmarkResult]) -> dict[str, float]:
    """Median standardised RMSE per preset over successful cells."""
    by: dict[str, list[float]] = {}
    for r in results:
        by.setdefault(r.preset, [])
        if not r.failed:
            by[r.preset].append(r.standardised_rmse)
    return {p: float(np.median(v)) if v else math.nan for p, v in by.items()}
