"""Objective functions: route selection cost, depot generation cost and the
balance-augmented selection cost, plus batched torch versions used in training.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .errors import DimensionMismatch, InfeasiblePlan
from .instance import Instance, distance
from .solution import Route, RoutePlan, validate


@dataclass(frozen=True)
class CostCoefficients:
    alpha: float = 1.0
    beta: float = 1.0
    delta: float = 2.0
    lam: float = 10.0
    epsilon: float = 10.0
    l_min: float = 0.2
    l_max: float = 0.7

    def __post_init__(self):
        if min(self.alpha, self.beta, self.delta, self.lam, self.epsilon) < 0:
            raise ValueError("cost weights must be non-negative")
        if not 0 <= self.l_min <= self.l_max:
            raise ValueError("need 0 <= l_min <= l_max")


@dataclass(frozen=True)
class CostBreakdown:
    total: float
    route_length: float
    depot_cost: float
    depots_opened: int
    vehicle_cost: float
    vehicles: int
    supply_penalty: float
    depot_lengths: tuple[float, ...] = field(default=(), compare=False)

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "route_length": self.route_length,
            "depot_cost": self.depot_cost,
            "depots_opened": self.depots_opened,
            "vehicle_cost": self.vehicle_cost,
            "vehicles": self.vehicles,
            "supply_penalty": self.supply_penalty,
        }


def route_length(route: Route, instance: Instance) -> float:
    if not route.stops:
        return 0.0
    dep = instance.depot_xy[route.depot]
    pts = [instance.customer_xy[s] for s in route.stops]
    total = distance(dep, pts[0])
    for a, b in zip(pts, pts[1:]):
        total += distance(a, b)
    return total + distance(pts[-1], dep)


def cost_sel(plan: RoutePlan, instance: Instance, coeffs: CostCoefficients = CostCoefficients(),
             check: bool = True) -> CostBreakdown:
    """Selection objective: length + opened depots + vehicles + supply excess."""
    if check:
        report = validate(plan, instance)
        if not report.ok:
            raise InfeasiblePlan("; ".join(report.violations))
    m = instance.m
    lengths = [0.0] * m
    vehicles = [0] * m
    dispatched = [0.0] * m
    for r in plan.routes:
        if not r.stops:
            continue
        lengths[r.depot] += route_length(r, instance)
        vehicles[r.depot] += 1
        dispatched[r.depot] += sum(float(instance.demand[s]) for s in r.stops)
    opened = [k for k in range(m) if vehicles[k] > 0]
    length = sum(lengths)
    depot_cost = sum(float(instance.opening_cost[k]) for k in opened)
    n_veh = sum(vehicles)
    vehicle_cost = instance.fleet.setup_cost * n_veh
    penalty = sum(max(dispatched[k] - float(instance.max_supply[k]), 0.0) for k in range(m))
    total = length + coeffs.alpha * depot_cost + coeffs.beta * vehicle_cost + coeffs.delta * penalty
    return CostBreakdown(total, length, depot_cost, len(opened), vehicle_cost, n_veh, penalty, tuple(lengths))


def depot_distance_penalties(depots, coeffs: CostCoefficients = CostCoefficients()) -> tuple[float, float]:
    """Weighted (too-far, too-close) penalties over unordered depot pairs."""
    pts = np.asarray(depots, dtype=np.float64).reshape(-1, 2)
    far = close = 0.0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            d = distance(pts[i], pts[j])
            far += coeffs.lam * max(d - coeffs.l_max, 0.0)
            close += coeffs.epsilon * max(coeffs.l_min - d, 0.0)
    return far, close


def cost_gen(depots, route_length: float, coeffs: CostCoefficients = CostCoefficients()) -> float:
    """Generation objective: route length plus inter-depot distance penalties.

    Only distinct pairs ``i < j`` are penalised; a depot's distance to itself
    is not an inter-depot distance.
    """
    far, close = depot_distance_penalties(depots, coeffs)
    return float(route_length) + far + close


def balance_penalty(lengths: Sequence[float], proportions: Sequence[float],
                    opened: Sequence[bool] | None = None) -> float:
    """Sum over ``k <= k'`` of ``|l_k - (rho_k / rho_k') * l_k'|`` over opened depots."""
    lengths = [float(x) for x in lengths]
    rho = [float(x) for x in proportions]
    if len(rho) != len(lengths):
        raise DimensionMismatch(f"{len(rho)} proportions for {len(lengths)} depots")
    if any(r <= 0 for r in rho):
        raise ValueError("proportions must be positive")
    if opened is None:
        opened = [True] * len(lengths)
    idx = [k for k in range(len(lengths)) if opened[k]]
    total = 0.0
    for a, k in enumerate(idx):
        for kp in idx[a:]:
            total += abs(lengths[k] - rho[k] / rho[kp] * lengths[kp])
    return total


def cost_balanced(plan: RoutePlan, instance: Instance, coeffs: CostCoefficients,
                  proportions: Sequence[float]) -> float:
    if len(proportions) != instance.m:
        raise DimensionMismatch(f"{len(proportions)} proportions for {instance.m} depots")
    br = cost_sel(plan, instance, coeffs)
    opened = [l > 0 or any(r.depot == k for r in plan.routes) for k, l in enumerate(br.depot_lengths)]
    return br.total + balance_penalty(br.depot_lengths, proportions, opened)


# ---------------------------------------------------------------------------
# batched versions over rollouts


@dataclass
class BatchCost:
    total: torch.Tensor
    route_length: torch.Tensor
    depot_cost: torch.Tensor
    depots_opened: torch.Tensor
    vehicle_cost: torch.Tensor
    vehicles: torch.Tensor
    supply_penalty: torch.Tensor
    depot_lengths: torch.Tensor  # (B, m)
    depot_vehicles: torch.Tensor  # (B, m)


def trajectory_costs(traj, batch, coeffs: CostCoefficients = CostCoefficients()) -> BatchCost:
    """Cost decomposition for every row of a :class:`~lrpgen.env.Trajectory`.

    Vehicles are counted at depot-to-customer transitions, so empty routes
    (consecutive depot actions) add neither a vehicle nor an opened depot.
    """
    m = batch.m
    B = batch.size
    acts = traj.actions
    prev = torch.cat([torch.zeros(B, 1, dtype=torch.long), acts[:, :-1]], dim=1)
    dep = traj.departures
    demand = torch.as_tensor(batch.vertex_demand, dtype=torch.float64)
    is_cust = acts >= m
    starts = (is_cust & (prev < m)).to(torch.float64)
    onehot = torch.nn.functional.one_hot(dep, m).to(torch.float64)  # (B, T, m)
    depot_vehicles = (starts.unsqueeze(-1) * onehot).sum(1)
    depot_lengths = (traj.costs.unsqueeze(-1) * onehot).sum(1)
    served = torch.gather(demand, 1, acts) * is_cust.to(torch.float64)
    dispatched = (served.unsqueeze(-1) * onehot).sum(1)
    opened = (depot_vehicles > 0).to(torch.float64)
    O = torch.as_tensor(batch.opening_cost, dtype=torch.float64)
    M = torch.as_tensor(batch.max_supply, dtype=torch.float64)
    U = torch.as_tensor(batch.setup_cost, dtype=torch.float64)
    length = depot_lengths.sum(1)
    depot_cost = (O * opened).sum(1)
    vehicles = depot_vehicles.sum(1)
    vehicle_cost = U * vehicles
    penalty = torch.clamp(dispatched - M, min=0.0).sum(1)
    total = length + coeffs.alpha * depot_cost + coeffs.beta * vehicle_cost + coeffs.delta * penalty
    return BatchCost(total, length, depot_cost, opened.sum(1), vehicle_cost, vehicles, penalty,
                     depot_lengths, depot_vehicles)


def batch_balance_penalty(depot_lengths: torch.Tensor, opened: torch.Tensor,
                          proportions: Sequence[float]) -> torch.Tensor:
    m = depot_lengths.shape[1]
    if len(proportions) != m:
        raise DimensionMismatch(f"{len(proportions)} proportions for {m} depots")
    rho = torch.as_tensor(proportions, dtype=depot_lengths.dtype)
    ratio = rho[:, None] / rho[None, :]  # rho_k / rho_k'
    diff = (depot_lengths[:, :, None] - ratio[None] * depot_lengths[:, None, :]).abs()
    upper = torch.triu(torch.ones(m, m, dtype=torch.bool))
    both = opened[:, :, None].bool() & opened[:, None, :].bool() & upper[None]
    return (diff * both).sum((1, 2))


def batch_depot_penalties(depots: torch.Tensor, coeffs: CostCoefficients = CostCoefficients()):
    """Differentiable (too-far, too-close) penalties for depots of shape ``(..., m, 2)``."""
    m = depots.shape[-2]
    if m < 2:
        z = depots.new_zeros(depots.shape[:-2])
        return z, z
    i, j = torch.triu_indices(m, m, offset=1)
    diff = depots[..., i, :] - depots[..., j, :]
    d = torch.sqrt((diff * diff).sum(-1) + 1e-18)
    far = coeffs.lam * torch.clamp(d - coeffs.l_max, min=0.0)
    close = coeffs.epsilon * torch.clamp(coeffs.l_min - d, min=0.0)
    return far.sum(-1), close.sum(-1)
