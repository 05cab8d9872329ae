import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, strategies as st

from autostat.svg import Chart, nice_ticks

NS = "{http://www.w3.org/2000/svg}"


class TestTicks:
    @pytest.mark.parametrize("lo, hi, want", [
        (0, 10, [0, 2, 4, 6, 8, 10]), (0, 1, [0, 0.2, 0.4, 0.6, 0.8, 1.0]),
        (1949, 1961, [1950, 1952.5, 1955, 1957.5, 1960])])
    def test_known_ranges(self, lo, hi, want):
        assert nice_ticks(lo, hi) == pytest.approx(want)

    @given(st.floats(-1e6, 1e6), st.floats(1e-3, 1e6))
    def test_ticks_lie_in_range_and_are_evenly_spaced(self, lo, span):
        t = nice_ticks(lo, lo + span)
        assert len(t) >= 2
        assert t[0] >= lo - 1e-9 * span and t[-1] <= lo + span + 1e-9 * max(span, abs(lo))
        assert np.allclose(np.diff(t), t[1] - t[0], rtol=1e-6)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            nice_ticks(0, float("inf"))


class TestChart:
    def chart(self):
        c = Chart(title="a < b", xlabel="t", ylabel="y")
        x = np.linspace(0, 1, 5)
        c.band(x, x - 1, x + 1, label="band")
        c.line(x, x, label="mean")
        c.scatter(x, x ** 2)
        return c

    def test_well_formed_xml(self):
        root = ET.fromstring(self.chart().render())
        assert root.tag == NS + "svg"
        assert len(root.findall(f".//{NS}circle")) == 5
        assert len(root.findall(f".//{NS}polygon")) == 1
        assert len(root.findall(f".//{NS}polyline")) == 1
        assert "a &lt; b" in self.chart().render()

    def test_deterministic(self):
        assert self.chart().render() == self.chart().render()

    def test_constant_series_renders(self):
        c = Chart()
        c.line([0, 1, 2], [3, 3, 3])
        ET.fromstring(c.render())

    def test_empty_and_non_finite_rejected(self):
        with pytest.raises(ValueError):
            Chart().render()
        c = Chart()
        c.line([0, 1], [0, np.nan])
        with pytest.raises(ValueError):
            c.render()
