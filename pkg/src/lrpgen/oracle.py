"""Exact solvers for tiny instances, used as ground truth.

The enumeration is organised as dynamic programs over customer subsets:
an exact closed tour for every (depot, subset) pair, the best split of each
subset into capacity-feasible routes, and finally every assignment of
customers to depots. This covers the same solution space as listing set
partitions and route permutations explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .cost import CostBreakdown, CostCoefficients, cost_sel
from .depots import DepotSet
from .errors import TooLarge
from .instance import Customer, FleetConfig, Instance, distance_matrix
from .solution import Route, RoutePlan, plan_to_trace

MAX_CUSTOMERS = 8
MAX_DEPOTS = 3


@dataclass(frozen=True)
class OracleResult:
    best_plan: RoutePlan
    best_cost: CostBreakdown
    states_explored: int


def _subset_loads(demand: np.ndarray) -> np.ndarray:
    n = len(demand)
    load = np.zeros(1 << n)
    for j in range(n):
        bit = 1 << j
        load[bit:2 * bit] = load[:bit] + demand[j]
    return load


def _submasks(R: int):
    sub = R
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & R


def _tour_order(f: np.ndarray, dist: np.ndarray, depot: int, nodes: Sequence[int], S: int) -> list[int]:
    """Recover the visiting order of an optimal closed tour over subset ``S``."""
    k = len(nodes)
    members = [j for j in range(k) if (S >> j) & 1]
    j = min(members, key=lambda j: (f[S, j] + dist[nodes[j], depot], j))
    order = [j]
    while S != (1 << j):
        prev_S = S ^ (1 << j)
        cands = [i for i in range(k) if (prev_S >> i) & 1]
        i = min(cands, key=lambda i: (abs(f[prev_S, i] + dist[nodes[i], nodes[j]] - f[S, j]), i))
        order.append(i)
        S, j = prev_S, i
    order.reverse()
    return order


def brute_force(instance: Instance, coeffs: CostCoefficients = CostCoefficients(),
                limit: tuple[int, int] = (MAX_CUSTOMERS, MAX_DEPOTS)) -> OracleResult:
    """Global minimum of the selection cost by exhaustive enumeration."""
    n, m = instance.n, instance.m
    if n > limit[0] or m > limit[1] or m < 1:
        raise TooLarge(f"oracle limited to n<={limit[0]}, 1<=m<={limit[1]} (got n={n}, m={m})")
    dist = np.ascontiguousarray(distance_matrix(instance))
    nodes = list(range(m, m + n))
    load = _subset_loads(instance.demand)
    Q = instance.fleet.capacity
    setup = coeffs.beta * instance.fleet.setup_cost
    full = (1 << n) - 1

    tables, depot_cost = [], []
    for k in range(m):
        tour, f = kernels.subset_tours(dist, k, nodes)
        best, choice = kernels.partition_dp(tour, load, Q, setup)
        adj = best + coeffs.delta * np.maximum(load - instance.max_supply[k], 0.0)
        adj[1:] += coeffs.alpha * instance.opening_cost[k]
        tables.append((f, choice))
        depot_cost.append(adj)

    best_total = np.inf
    ties: list[tuple[int, ...]] = []
    explored = 0

    def visit(k: int, rest: int, acc: float, assign: tuple[int, ...]):
        nonlocal best_total, ties, explored
        if k == m - 1:
            explored += 1
            total = acc + depot_cost[k][rest]
            assign = assign + (rest,)
            if total < best_total:
                best_total, ties = total, [assign]
            elif total == best_total:
                ties.append(assign)
            return
        for S in _submasks(rest):
            visit(k + 1, rest ^ S, acc + depot_cost[k][S], assign + (S,))

    visit(0, full, 0.0, ())

    def build(assign):
        routes = []
        for k, T in enumerate(assign):
            f, choice = tables[k]
            while T:
                S = int(choice[T])
                order = _tour_order(f, dist, k, nodes, S)
                routes.append(Route.build(k, order, instance))
                T ^= S
        return RoutePlan(tuple(routes))

    plans = [build(a) for a in ties]
    plan = min(plans, key=lambda p: plan_to_trace(p, instance))
    return OracleResult(plan, cost_sel(plan, instance, coeffs), explored)


def _as_customer_arrays(customers):
    if isinstance(customers, Instance):
        return customers.customer_xy, customers.demand, customers.fleet.capacity
    cust = list(customers)
    xy = np.array([c.position for c in cust], dtype=np.float64)
    q = np.array([c.demand for c in cust], dtype=np.float64)
    return xy, q, None


def brute_force_depot_placement(customers, coeffs: CostCoefficients = CostCoefficients(),
                               grid_resolution: int = 21, m: int = 2,
                               capacity: float | None = None) -> DepotSet:
    """Best depot placement on a regular grid under the generation objective.

    Candidate positions are the centres of a ``grid_resolution`` square grid
    over the unit square. Each placement is scored by the minimum route
    length for serving the customers from those depots (no opening or
    vehicle costs, as in the generation objective) plus the inter-depot
    distance penalties. ``customers`` is an :class:`Instance` or a sequence
    of :class:`Customer`; for the latter pass ``capacity``.
    """
    xy, q, inst_cap = _as_customer_arrays(customers)
    Q = capacity if capacity is not None else inst_cap
    if Q is None:
        raise ValueError("vehicle capacity required")
    n = len(q)
    if n > 6 or m > 2 or m < 1 or grid_resolution > 21 or grid_resolution < 1:
        raise TooLarge("placement oracle limited to n<=6, 1<=m<=2, grid_resolution<=21")
    r = grid_resolution
    ticks = (np.arange(r) + 0.5) / r
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)  # (G, 2)
    G = len(grid)

    cc = xy[:, None, :] - xy[None, :, :]
    dist_cc = np.ascontiguousarray(np.sqrt((cc * cc).sum(-1)))
    h = kernels.subset_paths(dist_cc, list(range(n)))
    gc = grid[:, None, :] - xy[None, :, :]
    dpc = np.sqrt((gc * gc).sum(-1))  # (G, n)
    load = _subset_loads(q)
    full = 1 << n
    tours = np.zeros((G, full))
    for S in range(1, full):
        idx = [j for j in range(n) if (S >> j) & 1]
        hs = h[S][np.ix_(idx, idx)]  # (k, k)
        ends = dpc[:, idx]
        tours[:, S] = (ends[:, :, None] + hs[None] + ends[:, None, :]).min(axis=(1, 2))
    part = np.stack([kernels.partition_dp(tours[g], load, Q, 0.0)[0] for g in range(G)])

    if m == 1:
        scores = part[:, full - 1]
        g = int(np.argmin(scores))
        return DepotSet(grid[g][None], float(scores[g]))

    comp = (full - 1) ^ np.arange(full)
    best, arg = np.inf, (0, 0)
    for g1 in range(G):
        lengths = (part[g1][None, :] + part[g1:, comp]).min(axis=1)  # partner g2 >= g1
        diff = grid[g1:] - grid[g1]
        d = np.sqrt((diff * diff).sum(-1))
        pen = coeffs.lam * np.maximum(d - coeffs.l_max, 0.0) + coeffs.epsilon * np.maximum(coeffs.l_min - d, 0.0)
        scores = lengths + pen
        j = int(np.argmin(scores))
        if scores[j] < best:
            best, arg = float(scores[j]), (g1, g1 + j)
    return DepotSet(grid[list(arg)], best)


def placement_score(customers, depots, coeffs: CostCoefficients = CostCoefficients(),
                    capacity: float | None = None) -> float:
    """Generation objective of a given depot placement, routed exactly by :func:`brute_force`."""
    xy, q, inst_cap = _as_customer_arrays(customers)
    Q = capacity if capacity is not None else inst_cap
    depots = np.asarray(depots, dtype=np.float64).reshape(-1, 2)
    inst = Instance(xy, q, depots, np.full(len(depots), np.inf), np.zeros(len(depots)),
                    FleetConfig(Q, 0.0))
    length_only = CostCoefficients(alpha=0.0, beta=0.0, delta=0.0, lam=coeffs.lam,
                                   epsilon=coeffs.epsilon, l_min=coeffs.l_min, l_max=coeffs.l_max)
    res = brute_force(inst, length_only)
    from .cost import cost_gen

    return cost_gen(depots, res.best_cost.route_length, coeffs)
