"""Markdown reports with SVG figures and a JSON model sidecar.

Output layout::

    <out>/report.md
    <out>/model.json
    <out>/figures/data.svg
    <out>/figures/component_<k>.svg
    <out>/figures/cumulative_<k>.svg
    <out>/figures/residuals.svg

Nothing time- or host-dependent is written, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels as kl
from .describe import ComponentDescription, format_number
from .gp import Dataset, Posterior, PosteriorComponent, ScoredModel
from .search import SearchTrace
from .svg import Chart

SCHEMA = "autostat.model/1"
GRID_POINTS = 300
EXTRAPOLATION_MARGIN = 0.1


def plot_grid(data: Dataset, points: int = GRID_POINTS,
              margin: float = EXTRAPOLATION_MARGIN) -> np.ndarray:
    """Evenly spaced grid over the data plus a forecasting margin on the right."""
    lo, hi = float(data.xs.min()), float(data.xs.max())
    span = hi - lo if hi > lo else 1.0
    return np.linspace(lo, hi + margin * span, points)


@dataclass(frozen=True)
class ComponentStatistics:
    """Cross-validated error after adding a component, and its contribution."""

    cv_mae: float
    cv_mae_reduction: float
    explained_variance: float
    improves_cv: bool


def component_statistics(description: ComponentDescription) -> ComponentStatistics:
    return ComponentStatistics(description.cv_mae, description.cv_mae_reduction,
                               description.explained_variance, description.improves_cv)


@dataclass
class Figure:
    kind: str  # data | component | cumulative | residuals
    path: str  # relative to the report directory
    chart: Chart
    mean: np.ndarray | None = None


@dataclass
class Report:
    """An assembled report; :meth:`write` puts it on disk."""

    markdown: str
    sidecar: dict
    figures: list[Figure] = field(default_factory=list)

    def write(self, out_dir: "str | os.PathLike") -> Path:
        out = Path(out_dir)
        (out / "figures").mkdir(parents=True, exist_ok=True)
        for fig in self.figures:
            (out / fig.path).write_text(fig.chart.render(), encoding="utf-8")
        (out / "report.md").write_text(self.markdown, encoding="utf-8")
        (out / "model.json").write_text(
            json.dumps(self.sidecar, indent=2, sort_keys=False) + "\n", encoding="utf-8")
        return out / "report.md"


def _labels(data: Dataset) -> tuple[str, str]:
    return (data.x_unit or "x"), (data.y_unit or "y")


def _plot_component(i: int, comp: PosteriorComponent, grid, data, partial) -> Figure:
    xl, yl = _labels(data)
    chart = Chart(title=f"Component {i}", xlabel=xl, ylabel=yl)
    if comp.is_noise:
        # noise has no posterior structure worth a band; show what it absorbs
        chart.scatter(data.xs, partial, label="residuals attributed to noise")
    else:
        sd = np.sqrt(comp.variance)
        chart.band(grid, comp.mean - 2 * sd, comp.mean + 2 * sd, label="posterior mean ± 2 SD")
        chart.scatter(data.xs, partial, label="data minus other components", color="#999999",
                      radius=1.2)
        chart.line(grid, comp.mean, color="#1f77b4")
    return Figure("component", f"figures/component_{i}.svg", chart, comp.mean)


def _cumulative(post: Posterior, terms, grid):
    expr = kl.add(*(t.to_expr() for t in terms))
    mean, var = post.conditional(expr, grid)
    s = post.data.y_std
    return mean * s + post.data.y_mean, var * s * s


def build_report(model: ScoredModel, data: Dataset,
                 descriptions: Sequence[ComponentDescription],
                 decomposition: Sequence[PosteriorComponent] | None = None,
                 trace: SearchTrace | None = None,
                 grid: np.ndarray | None = None) -> Report:
    """Assemble text, figures and sidecar for a fitted model.

    ``descriptions`` must be in report order (as returned by
    :func:`describe.describe_components`); ``decomposition`` holds the
    posterior of every normal-form term on ``grid`` in normal-form order.
    """
    grid = plot_grid(data) if grid is None else np.asarray(grid, dtype=float)
    terms = list(kl.to_normal_form(model.kernel))
    if len(descriptions) != len(terms):
        raise ValueError(f"{len(descriptions)} descriptions for {len(terms)} components")
    post = Posterior(model.kernel, data)
    if decomposition is None:
        decomposition = post.decompose(grid, terms)
    at_data = post.decompose(data.xs, terms)
    # signal only: the noise terms would otherwise soak up every residual
    fitted = data.y_mean + sum((c.mean for c in at_data if not c.is_noise), np.zeros(data.n))
    xl, yl = _labels(data)

    figures = []
    raw = Chart(title=data.name or "data", xlabel=xl, ylabel=yl)
    raw.line(data.xs, data.ys, color="#1f77b4", width=1.0)
    raw.scatter(data.xs, data.ys, color="#1f77b4", radius=1.4)
    figures.append(Figure("data", "figures/data.svg", raw))

    lines = [f"# Analysis of {data.name or 'the data'}", ""]
    lines += ["## Data", ""]
    x_unit = f" {data.x_unit}" if data.x_unit else ""
    lines.append(f"{data.n} observations with x from {format_number(float(data.xs.min()))} "
                 f"to {format_number(float(data.xs.max()))}{x_unit}; the output has mean "
                 f"{format_number(data.y_mean)} and standard deviation "
                 f"{format_number(data.y_std)}.")
    lines += ["", "![data](figures/data.svg)", ""]

    lines += ["## Executive summary", ""]
    k = len(descriptions)
    noun = "component" if k == 1 else "components"
    lines.append(f"The selected model has {k} additive {noun}. They are listed in the order "
                 "that most reduces the 10-fold cross-validated mean absolute error (MAE).")
    lines.append("")
    for rank, d in enumerate(descriptions, 1):
        lines.append(f"{rank}. {d.summary}")
    lines += ["", "| # | CV MAE | MAE reduction | Residual variance explained |",
              "|---|---|---|---|"]
    for rank, d in enumerate(descriptions, 1):
        flag = "" if d.improves_cv else " (no improvement)"
        lines.append(f"| {rank} | {format_number(d.cv_mae)} | "
                     f"{format_number(d.cv_mae_reduction)}{flag} | "
                     f"{format_number(100 * d.explained_variance)}% |")
    lines.append("")

    for rank, d in enumerate(descriptions, 1):
        comp = decomposition[d.term_index]
        others = sum((c.mean for j, c in enumerate(at_data) if j != d.term_index),
                     np.zeros(data.n))
        partial = data.ys - data.y_mean - others
        fig = _plot_component(rank, comp, grid, data, partial)
        figures.append(fig)
        included = [terms[e.term_index] for e in descriptions[:rank]]
        cm, cv = _cumulative(post, included, grid)
        csd = np.sqrt(cv)
        cum = Chart(title=f"Sum of components 1 to {rank}", xlabel=xl, ylabel=yl)
        cum.band(grid, cm - 2 * csd, cm + 2 * csd, label="posterior mean ± 2 SD")
        cum.scatter(data.xs, data.ys, color="#999999", radius=1.2, label="data")
        cum.line(grid, cm, color="#1f77b4")
        figures.append(Figure("cumulative", f"figures/cumulative_{rank}.svg", cum, cm))
        lines += [f"## Component {rank}", "", d.full_text, "",
                  f"![component {rank}](figures/component_{rank}.svg)",
                  f"![cumulative fit {rank}](figures/cumulative_{rank}.svg)", ""]

    resid = data.ys - fitted
    rc = Chart(title="Residuals", xlabel=xl, ylabel=yl)
    rc.scatter(data.xs, resid, color="#d62728", radius=1.4)
    figures.append(Figure("residuals", "figures/residuals.svg", rc))
    rmse = float(np.sqrt(np.mean(resid ** 2)))
    lines += ["## Model check", "",
              f"Subtracting the posterior mean of the non-noise components leaves residuals "
              f"with root mean square "
              f"{format_number(rmse)} and largest magnitude {format_number(float(np.abs(resid).max()))}.",
              "", "![residuals](figures/residuals.svg)", ""]

    lines += ["## Appendix", "", f"Kernel: `{model.kernel}`", "",
              f"Log marginal likelihood {model.log_ml:.6f}, BIC {model.bic:.6f}, "
              f"{model.param_count} parameters, n = {model.n}.", ""]
    if trace is not None and len(trace):
        lines += ["| Depth | Candidates | Failed | Best candidate | BIC |", "|---|---|---|---|---|"]
        for rec in trace:
            lines.append(f"| {rec.depth} | {len(rec.candidates)} | {len(rec.failed)} | "
                         f"`{kl.structure(rec.selected.kernel)}` | {rec.selected.bic:.4f} |")
        lines.append("")

    sidecar = model_sidecar(model, data, descriptions, trace)
    return Report("\n".join(lines), sidecar, figures)


def _num(v: float):
    return v if math.isfinite(v) else None


def model_sidecar(model: ScoredModel, data: Dataset,
                  descriptions: Sequence[ComponentDescription],
                  trace: SearchTrace | None = None) -> dict:
    """Machine-readable summary; see the README for the key reference."""
    names = [f"{n.kind.name if hasattr(n, 'kind') else type(n).__name__}.{name}"
             for n in kl.param_nodes(model.kernel) for name in kl.own_param_names(n)]
    values = kl.get_params(model.kernel)
    out = {
        "schema": SCHEMA,
        "dataset": {
            "name": data.name, "n": data.n, "x_unit": data.x_unit, "y_unit": data.y_unit,
            "x_min": float(data.xs.min()), "x_max": float(data.xs.max()),
            "y_mean": data.y_mean, "y_std": data.y_std,
        },
        "kernel": str(model.kernel),
        "parameters": [{"name": n, "value": v} for n, v in zip(names, values)],
        "log_ml": model.log_ml,
        "bic": model.bic,
        "param_count": model.param_count,
        "restarts_used": model.restarts_used,
        "components": [
            {
                "rank": rank,
                "term": str(d.term),
                "summary": d.summary,
                "head_noun": d.head_noun_kind,
                "is_noise": d.is_noise,
                "cv_mae": _num(d.cv_mae),
                "cv_mae_reduction": _num(d.cv_mae_reduction),
                "explained_variance": _num(d.explained_variance),
                "improves_cv": d.improves_cv,
            }
            for rank, d in enumerate(descriptions, 1)
        ],
    }
    if trace is not None:
        out["search"] = [
            {"depth": r.depth, "candidates": len(r.candidates), "failed": len(r.failed),
             "selected": str(r.selected.kernel), "bic": r.selected.bic, "improved": r.improved}
            for r in trace
        ]
    return out


def render_report(model: ScoredModel, data: Dataset,
                  descriptions: Sequence[ComponentDescription],
                  decomposition: Sequence[PosteriorComponent] | None = None,
                  out_dir: "str | os.PathLike" = "report",
                  trace: SearchTrace | None = None) -> Report:
    """Build the report and write it under ``out_dir``."""
    report = build_report(model, data, descriptions, decomposition, trace)
    report.write(out_dir)
    return report
