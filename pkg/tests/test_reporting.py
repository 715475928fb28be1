import math
import xml.etree.ElementTree as ET

import pytest

from causaldecomp.reporting import _ticks, decomposition_table, metric_panels_svg, metrics_markdown


def rows(estimators=("a", "b"), sizes=(100, 500), ratios=(0.3, 1.0, 3.0)):
    out = []
    for e in estimators:
        for n in sizes:
            for r in ratios:
                for t in ("delta", "zeta"):
                    out.append({"estimator": e, "target": t, "n": n, "ratio": r, "bias": 0.01 * r,
                                "rmse": 0.1 / math.sqrt(n), "coverage": 0.94, "M": 10, "B": 20,
                                "mediator": "continuous"})
    return out


class TestTable:
    def test_without_intervals(self):
        text = decomposition_table([{"estimator": "x", "tau": -0.965, "delta": -0.524,
                                     "zeta": -0.441, "percent_reduction": 54.3005}])
        lines = text.splitlines()
        assert lines[0].split() == ["x"]
        assert "(95% CI)" not in text
        assert lines[-1].split()[-1] == "54.3"

    def test_missing_value(self):
        text = decomposition_table([{"estimator": "x", "tau": 0.0, "delta": 0.1, "zeta": -0.1,
                                     "percent_reduction": float("nan")}])
        assert text.splitlines()[-1].split()[-1] == "NA"


class TestSvg:
    def test_well_formed_and_panels(self):
        svg = metric_panels_svg(rows(), "rmse", "delta", provenance="seed=1")
        root = ET.fromstring(svg)
        ns = {"s": "http://www.w3.org/2000/svg"}
        panels = root.findall("s:g[@class='panel']", ns)
        assert [p.get("data-n") for p in panels] == ["100", "500"]
        assert len(root.findall(".//s:polyline[@class='series']", ns)) == 4
        assert root.find("s:metadata", ns).text == "seed=1"

    def test_reference_line_only_for_coverage(self):
        assert 'class="reference"' in metric_panels_svg(rows(), "coverage", "zeta")
        assert 'class="reference"' not in metric_panels_svg(rows(), "bias", "zeta")

    def test_nan_points_dropped(self):
        data = rows(estimators=("a",), sizes=(100,))
        for r in data:
            r["coverage"] = float("nan")
        svg = metric_panels_svg(data, "coverage", "delta")
        assert 'class="series"' not in svg
        ET.fromstring(svg)

    def test_escaping(self):
        svg = metric_panels_svg(rows(estimators=("a<b>",)), "bias", "delta")
        ET.fromstring(svg)
        assert "a&lt;b&gt;" in svg


@pytest.mark.parametrize("lo,hi", [(0.0, 1.0), (-0.031, 0.2), (0.9, 0.96), (-5.0, 120.0)])
def test_ticks_cover_range(lo, hi):
    t = _ticks(lo, hi)
    assert 2 <= len(t) <= 11
    assert all(lo - 1e-9 <= v <= hi + 1e-9 for v in t)
    steps = {round(b - a, 9) for a, b in zip(t, t[1:])}
    assert len(steps) == 1


def test_markdown_groups():
    md = metrics_markdown(rows(), provenance="seed=2")
    assert md.count("## continuous mediator, n = ") == 2
    assert "<!-- seed=2 -->" in md
    assert md.count("| a | delta |") == 6
