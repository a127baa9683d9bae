import math

import numpy as np
import pytest
import torch

from lrpgen.cost import (CostCoefficients, balance_penalty, batch_balance_penalty, batch_depot_penalties,
                         cost_balanced, cost_gen, cost_sel, depot_distance_penalties, trajectory_costs)
from lrpgen.env import BatchEnv, random_selector, run_batch
from lrpgen.errors import DimensionMismatch, InfeasiblePlan
from lrpgen.instance import FleetConfig, Instance, get_preset, sample_batch
from lrpgen.solution import RoutePlan, trace_to_plan
from reference import recompute_selection


def two_depot_instance():
    return Instance([[0.0, 0.3], [1.0, 0.3], [1.0, 0.6]], [5.0, 5.0, 5.0], [[0.0, 0.0], [1.0, 0.0]],
                    [10.0, 8.0], [2.0, 3.0], FleetConfig(20.0, 0.3))


def test_selection_cost_by_hand():
    inst = two_depot_instance()
    plan = RoutePlan.from_lists([(0, [0]), (1, [1, 2])], inst)
    c = cost_sel(plan, inst)
    assert c.route_length == pytest.approx(0.6 + 1.2)
    assert c.depots_opened == 2 and c.depot_cost == 5.0
    assert c.vehicles == 2 and c.vehicle_cost == pytest.approx(0.6)
    assert c.supply_penalty == pytest.approx(2.0)  # depot 1 ships 10 against 8
    assert c.total == pytest.approx(1.8 + 5.0 + 0.6 + 2 * 2.0)
    assert c.depot_lengths == pytest.approx((0.6, 1.2))


def test_selection_cost_weights():
    inst = two_depot_instance()
    plan = RoutePlan.from_lists([(0, [0, 1, 2])], inst)
    w = CostCoefficients(alpha=0.5, beta=2.0, delta=3.0)
    c = cost_sel(plan, inst, w)
    assert c.total == pytest.approx(c.route_length + 0.5 * 2.0 + 2.0 * 0.3 + 3.0 * 5.0)
    assert recompute_selection(plan, inst, w)["total"] == pytest.approx(c.total, abs=1e-12)


def test_infeasible_plan_is_rejected():
    inst = two_depot_instance()
    with pytest.raises(InfeasiblePlan, match="not served"):
        cost_sel(RoutePlan.from_lists([(0, [0, 1])], inst), inst)


def test_coefficient_validation():
    with pytest.raises(ValueError):
        CostCoefficients(alpha=-1)
    with pytest.raises(ValueError):
        CostCoefficients(l_min=0.8, l_max=0.7)


@pytest.mark.parametrize("depots, expected", [
    ([(0.05, 0.5), (0.95, 0.5)], 2.0),
    ([(0.3, 0.5), (0.75, 0.5)], 0.0),
    ([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], 10 * (0.6 + math.sqrt(2) - 0.7)),
    ([(0.5, 0.5), (0.55, 0.5)], 10 * 0.15),
    ([(0.5, 0.5)], 0.0),
])
def test_generation_cost_examples(depots, expected):
    assert cost_gen(depots, 1.5) == pytest.approx(1.5 + expected, abs=1e-12)


def test_batched_depot_penalties_agree():
    rng = np.random.default_rng(0)
    dep = rng.uniform(size=(20, 3, 2))
    far, close = batch_depot_penalties(torch.as_tensor(dep))
    for b in range(20):
        f, c = depot_distance_penalties(dep[b])
        assert float(far[b]) == pytest.approx(f, abs=1e-9)
        assert float(close[b]) == pytest.approx(c, abs=1e-9)


@pytest.mark.parametrize("lengths, rho, expected", [
    ((3.0, 3.0), (1, 1), 0.0),
    ((3.487, 2.729), (1, 1), 0.758),
    ((2.0, 4.0), (1, 2), 0.0),
    ((1.0, 2.0, 4.0), (1, 1, 1), 1.0 + 3.0 + 2.0),
])
def test_balance_penalty_examples(lengths, rho, expected):
    assert balance_penalty(lengths, rho) == pytest.approx(expected, abs=1e-12)


def test_balance_penalty_skips_closed_depots():
    assert balance_penalty((2.0, 0.0, 2.0), (1, 1, 1), (True, False, True)) == 0.0
    with pytest.raises(DimensionMismatch):
        balance_penalty((1.0, 2.0), (1.0,))
    with pytest.raises(ValueError):
        balance_penalty((1.0, 2.0), (1.0, 0.0))


def test_cost_balanced():
    inst = two_depot_instance()
    plan = RoutePlan.from_lists([(0, [0]), (1, [1, 2])], inst)
    base = cost_sel(plan, inst).total
    assert cost_balanced(plan, inst, CostCoefficients(), (1, 1)) == pytest.approx(base + 0.6)
    with pytest.raises(DimensionMismatch):
        cost_balanced(plan, inst, CostCoefficients(), (1, 1, 1))


def test_batched_costs_match_scalar():
    batch = sample_batch(get_preset("toy").resized(8, 3), 32, np.random.default_rng(3))
    traj = run_batch(BatchEnv(batch), random_selector(torch.Generator().manual_seed(3)))
    w = CostCoefficients(alpha=1.1, beta=0.9, delta=2.5)
    bc = trajectory_costs(traj, batch, w)
    rho = (1.0, 2.0, 1.0)
    pen = batch_balance_penalty(bc.depot_lengths, bc.depot_vehicles > 0, rho)
    for b in range(batch.size):
        inst = batch[b]
        plan = trace_to_plan(traj.trace(b), inst)
        c = cost_sel(plan, inst, w)
        assert float(bc.total[b]) == pytest.approx(c.total, abs=1e-9)
        assert int(bc.vehicles[b]) == c.vehicles
        assert int(bc.depots_opened[b]) == c.depots_opened
        assert float(bc.supply_penalty[b]) == pytest.approx(c.supply_penalty, abs=1e-9)
        assert float(pen[b]) + c.total == pytest.approx(cost_balanced(plan, inst, w, rho), abs=1e-9)
