import json
import math

import numpy as np
import pytest

from autostat import kernels as kl
from autostat.describe import describe_components
from autostat.gp import Dataset, Posterior, bic, fit_kernel
from autostat.kernels import parse_kernel
from autostat.report import GRID_POINTS, SCHEMA, build_report, plot_grid, render_report
from autostat.search import SearchConfig, greedy_search


@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(2)
    x = np.linspace(0, 6, 70)
    data = Dataset(x, np.sin(2 * np.pi * x / 1.5) + 0.3 * x + 0.1 * rng.standard_normal(70),
                   x_unit="day", y_unit="metre", name="toy")
    model, trace = greedy_search(data, SearchConfig(max_depth=2, restarts=2))
    return model, data, describe_components(model.kernel, data), trace


def test_grid_covers_data_and_forecast():
    d = Dataset([0.0, 1.0, 10.0], [1.0, 2.0, 3.0])
    g = plot_grid(d)
    assert len(g) == GRID_POINTS and g[0] == 0.0 and g[-1] == pytest.approx(11.0)


class TestReport:
    def test_byte_identical_runs(self, fitted, tmp_path):
        model, data, descs, trace = fitted
        render_report(model, data, descs, out_dir=tmp_path / "a", trace=trace)
        render_report(model, data, descs, out_dir=tmp_path / "b", trace=trace)
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*")
                       if p.is_file())
        assert {"report.md", "model.json", "figures/data.svg", "figures/residuals.svg"} <= \
            {str(f) for f in files}
        for f in files:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_every_description_appears_once(self, fitted):
        model, data, descs, trace = fitted
        md = build_report(model, data, descs, trace=trace).markdown
        for d in descs:
            assert md.count(d.full_text) == 1
        assert md.count("## Component ") == len(kl.to_normal_form(model.kernel))

    def test_component_figures_plot_the_decomposition(self, fitted):
        model, data, descs, _ = fitted
        grid = plot_grid(data)
        decomp = Posterior(model.kernel, data).decompose(grid)
        rep = build_report(model, data, descs, decomposition=decomp, grid=grid)
        comps = [f for f in rep.figures if f.kind == "component"]
        assert len(comps) == len(descs)
        for fig, d in zip(comps, descs):
            assert np.array_equal(fig.mean, decomp[d.term_index].mean)

    def test_noise_component_is_a_scatter(self, fitted):
        model, data, descs, _ = fitted
        rep = build_report(model, data, descs)
        comps = [f for f in rep.figures if f.kind == "component"]
        for fig, d in zip(comps, descs):
            kinds = [s.kind for s in fig.chart.series]
            assert kinds == (["scatter"] if d.is_noise else ["band", "scatter", "line"])

    def test_sidecar_round_trip(self, fitted, tmp_path):
        model, data, descs, trace = fitted
        render_report(model, data, descs, out_dir=tmp_path, trace=trace)
        side = json.loads((tmp_path / "model.json").read_text())
        assert side["schema"] == SCHEMA
        assert side["dataset"]["n"] == data.n and side["dataset"]["x_unit"] == "day"
        k = parse_kernel(side["kernel"])
        assert kl.structure(k) == kl.structure(model.kernel)
        assert len(side["parameters"]) == side["param_count"] == kl.count_params(k)
        assert [p["value"] for p in side["parameters"]] == pytest.approx(kl.get_params(k))
        assert side["bic"] == pytest.approx(bic(side["log_ml"], side["param_count"], data.n),
                                            abs=1e-6)
        assert [c["rank"] for c in side["components"]] == list(range(1, len(descs) + 1))
        assert [s["depth"] for s in side["search"]] == [r.depth for r in trace]

    def test_mismatched_descriptions_rejected(self, fitted):
        model, data, descs, _ = fitted
        with pytest.raises(ValueError):
            build_report(model, data, descs[:-1])

    def test_noise_only_model(self):
        rng = np.random.default_rng(0)
        data = Dataset(np.arange(30.0), rng.standard_normal(30))
        model = fit_kernel(parse_kernel("WN"), data, restarts=1)
        descs = describe_components(model.kernel, data)
        md = build_report(model, data, descs).markdown
        assert "1. Uncorrelated noise" in md
        assert "## Component 1" in md and "## Component 2" not in md
        assert math.isfinite(model.bic)
