import xml.etree.ElementTree as ET

import numpy as np
import pytest

from lrpgen.depots import DepotDistribution
from lrpgen.heuristics import AlnsParams, solve_alns
from lrpgen.instance import get_preset, sample_instance
from lrpgen.plot import density_grid, heatmap_peak, heatmap_svg, route_map_svg


def test_route_map_is_valid_svg():
    inst = sample_instance(get_preset("toy"), 0)
    plan = solve_alns(inst, params=AlnsParams(iterations=50))
    svg = route_map_svg(inst, plan, title="demo & test")
    root = ET.fromstring(svg)
    ns = "{http://www.w3.org/2000/svg}"
    assert len(root.findall(f"{ns}polyline")) == len(plan.routes)
    assert len(root.findall(f"{ns}circle")) == inst.n
    assert root.find(f"{ns}title").text == "demo & test"


def test_density_integrates_to_depot_count():
    dist = DepotDistribution(np.array([0.5, -0.5, -1.0, 1.0]), np.eye(4) * 0.7)
    grid = density_grid(dist, 300)
    assert grid.sum() / 300**2 == pytest.approx(2.0, rel=2e-2)


def test_heatmap_peak_tracks_mean():
    # one tight depot at sigmoid(1.0), sigmoid(-2.0)
    dist = DepotDistribution(np.array([1.0, -2.0]), np.eye(2) * 0.05)
    x, y = heatmap_peak(dist, 200)
    assert x == pytest.approx(1 / (1 + np.exp(-1.0)), abs=0.02)
    assert y == pytest.approx(1 / (1 + np.exp(2.0)), abs=0.02)


def test_heatmap_svg_cells():
    dist = DepotDistribution(np.zeros(2), np.eye(2))
    root = ET.fromstring(heatmap_svg(dist, resolution=10))
    assert len(root.findall("{http://www.w3.org/2000/svg}rect")) == 100
