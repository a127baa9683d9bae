"""Shared machinery for the classical baselines.

Solutions are handled as lists of ``(depot, [customers])`` pairs while
searching; customers are indices ``0..n-1`` and depots ``0..m-1``.
"""
from __future__ import annotations

import numpy as np

from .. import kernels
from ..cost import CostCoefficients
from ..errors import InfeasibleInstance
from ..instance import Instance, distance_matrix
from ..solution import Route, RoutePlan


class Evaluator:
    """Fast objective evaluation mirroring :func:`lrpgen.cost.cost_sel`."""

    def __init__(self, instance: Instance, coeffs: CostCoefficients):
        if np.any(instance.demand > instance.fleet.capacity):
            raise InfeasibleInstance("a customer demand exceeds the vehicle capacity")
        if instance.m < 1:
            raise InfeasibleInstance("need at least one depot")
        self.instance = instance
        self.coeffs = coeffs
        self.n, self.m = instance.n, instance.m
        self.Q = float(instance.fleet.capacity)
        self.dist = np.ascontiguousarray(distance_matrix(instance))
        self.D = self.dist.tolist()
        self.q = [float(x) for x in instance.demand]
        self.vq = np.concatenate([np.zeros(self.m), instance.demand])
        self.open_cost = [coeffs.alpha * float(o) for o in instance.opening_cost]
        self.supply = [float(x) for x in instance.max_supply]
        self.veh_cost = coeffs.beta * instance.fleet.setup_cost
        self.delta = coeffs.delta

    def route_len(self, depot: int, stops) -> float:
        if not stops:
            return 0.0
        D, m = self.D, self.m
        total = D[depot][stops[0] + m]
        for a, b in zip(stops, stops[1:]):
            total += D[a + m][b + m]
        return total + D[stops[-1] + m][depot]

    def total(self, routes) -> float:
        m = self.m
        loads = [0.0] * m
        used = [False] * m
        cost = 0.0
        for depot, stops in routes:
            if not stops:
                continue
            cost += self.route_len(depot, stops) + self.veh_cost
            used[depot] = True
            loads[depot] += sum(self.q[s] for s in stops)
        for k in range(m):
            if used[k]:
                cost += self.open_cost[k]
                if loads[k] > self.supply[k]:
                    cost += self.delta * (loads[k] - self.supply[k])
        return cost

    def to_plan(self, routes) -> RoutePlan:
        return RoutePlan(tuple(Route.build(d, s, self.instance) for d, s in routes if s))

    # giant-tour decoding shared by GA and TS
    def decode(self, perm, open_mask, improve: bool = True):
        """Split a giant tour over the open depots into routes."""
        m = self.m
        depots = [k for k in range(m) if open_mask[k]]
        verts = [c + m for c in perm]
        _, pred, dep_of = kernels.split_tour(self.dist, verts, self.vq, self.Q, depots, self.veh_cost)
        routes = []
        j = len(perm)
        while j > 0:
            i = int(pred[j])
            stops = list(perm[i:j])
            depot = int(dep_of[j])
            if improve and len(stops) > 2:
                stops = [int(v) - m for v in kernels.two_opt(self.dist, depot, [s + m for s in stops])]
            routes.append((depot, stops))
            j = i
        routes.reverse()
        if improve:
            routes = self.reassign(routes)
        return routes

    def reassign(self, routes):
        """Move whole routes between depots while the objective improves.

        The split ignores supply caps and opening costs, so this pass is what
        lets a giant tour spread load over several depots.
        """
        routes = [(d, s) for d, s in routes if s]
        cost = self.total(routes)
        improved = True
        while improved:
            improved = False
            for r in range(len(routes)):
                d0, stops = routes[r]
                for k in range(self.m):
                    if k == d0:
                        continue
                    routes[r] = (k, stops)
                    c = self.total(routes)
                    if c < cost - 1e-12:
                        cost, d0, improved = c, k, True
                    else:
                        routes[r] = (d0, stops)
        return routes


def nearest_depot_to_centroid(instance: Instance) -> int:
    c = instance.customer_xy.mean(axis=0)
    return int(np.argmin(((instance.depot_xy - c) ** 2).sum(1)))


def greedy_initial(ev: Evaluator) -> list:
    """Nearest-feasible-neighbour routes from the depot closest to the customer centroid."""
    depot = nearest_depot_to_centroid(ev.instance)
    m, D = ev.m, ev.D
    left = set(range(ev.n))
    routes = []
    while left:
        load, here, stops = ev.Q, depot, []
        while True:
            fits = [c for c in left if ev.q[c] <= load]
            if not fits:
                break
            c = min(fits, key=lambda c: (D[here][c + m], c))
            stops.append(c)
            left.discard(c)
            load -= ev.q[c]
            here = c + m
        routes.append((depot, stops))
    return routes


def routes_to_giant(routes, m: int):
    """Concatenate the route stops into a giant tour plus the used-depot mask."""
    perm = [c for _, stops in routes for c in stops]
    mask = [False] * m
    for d, stops in routes:
        if stops:
            mask[d] = True
    return perm, mask
