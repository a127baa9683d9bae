"""Adaptive large neighbourhood search baseline."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass

from ..cost import CostCoefficients
from ..instance import Instance
from ..solution import RoutePlan
from .base import Evaluator, greedy_initial


@dataclass(frozen=True)
class AlnsParams:
    destroy_fraction: tuple[float, float] = (0.1, 0.4)
    worst_count: tuple[int, int] = (5, 10)
    regret_k: int = 5
    rewards: tuple[float, float, float, float] = (30.0, 20.0, 10.0, -10.0)
    weight_decay: float = 0.4
    threshold_decay: float = 0.9
    initial_threshold: float = 0.2
    segment: int = 100
    iterations: int = 5000
    min_weight: float = 1.0

    def __post_init__(self):
        lo, hi = self.destroy_fraction
        if not 0 < lo <= hi < 1:
            raise ValueError("destroy fraction range must lie in (0, 1)")
        if not 0 < self.weight_decay <= 1 or not 0 < self.threshold_decay <= 1:
            raise ValueError("decay factors must lie in (0, 1]")
        if self.iterations < 0 or self.segment < 1:
            raise ValueError("iteration counts must be positive")


class _Insertion:
    """Caches per-route loads and per-depot dispatch for insertion scoring."""

    def __init__(self, ev: Evaluator, routes):
        self.ev = ev
        self.routes = routes
        self.route_load = [sum(ev.q[s] for s in st) for _, st in routes]
        self.depot_load = [0.0] * ev.m
        self.depot_routes = [0] * ev.m
        for (d, st), l in zip(routes, self.route_load):
            if st:
                self.depot_load[d] += l
                self.depot_routes[d] += 1

    def _supply_delta(self, depot, q):
        ev = self.ev
        cur = self.depot_load[depot]
        M = ev.supply[depot]
        return ev.delta * (max(cur + q - M, 0.0) - max(cur - M, 0.0))

    def options(self, c):
        """All feasible ``(delta_cost, route_index, position)``; route_index -1-k opens a route at depot k."""
        ev = self.ev
        D, m, q = ev.D, ev.m, ev.q[c]
        cv = c + m
        out = []
        for r, (d, st) in enumerate(self.routes):
            if not st or self.route_load[r] + q > ev.Q:
                continue
            sup = self._supply_delta(d, q)
            prev = d
            for p in range(len(st) + 1):
                nxt = st[p] + m if p < len(st) else d
                out.append((D[prev][cv] + D[cv][nxt] - D[prev][nxt] + sup, r, p))
                prev = nxt
        for k in range(m):
            extra = ev.veh_cost + (ev.open_cost[k] if self.depot_routes[k] == 0 else 0.0)
            out.append((2.0 * D[k][cv] + extra + self._supply_delta(k, q), -1 - k, 0))
        return out

    def apply(self, c, r, p):
        ev = self.ev
        if r < 0:
            k = -1 - r
            self.routes.append((k, [c]))
            self.route_load.append(ev.q[c])
            self.depot_routes[k] += 1
            self.depot_load[k] += ev.q[c]
        else:
            d, st = self.routes[r]
            st.insert(p, c)
            self.route_load[r] += ev.q[c]
            self.depot_load[d] += ev.q[c]


class AlnsSolver:
    def __init__(self, instance: Instance, coeffs: CostCoefficients = CostCoefficients(),
                 params: AlnsParams = AlnsParams(), seed=0):
        self.ev = Evaluator(instance, coeffs)
        self.params = params
        self.rng = random.Random(seed)
        self.destroy_ops = [self.random_removal, self.worst_removal]
        self.repair_ops = [self.random_repair, self.greedy_repair, self.regret_repair]
        self.history: list[float] = []

    # -- destroy -----------------------------------------------------------
    def random_removal(self, routes):
        n = self.ev.n
        lo, hi = self.params.destroy_fraction
        k = max(1, int(round(self.rng.uniform(lo, hi) * n)))
        removed = set(self.rng.sample(range(n), min(k, n)))
        return [(d, [s for s in st if s not in removed]) for d, st in routes], sorted(removed)

    def worst_removal(self, routes):
        ev = self.ev
        D, m = ev.D, ev.m
        lo, hi = self.params.worst_count
        k = min(self.rng.randint(lo, hi), max(1, ev.n // 2))
        gains = []
        for d, st in routes:
            for p, s in enumerate(st):
                prev = d if p == 0 else st[p - 1] + m
                nxt = d if p == len(st) - 1 else st[p + 1] + m
                gains.append((D[prev][s + m] + D[s + m][nxt] - D[prev][nxt] + self.rng.random() * 1e-9, s))
        gains.sort(reverse=True)
        removed = {s for _, s in gains[:k]}
        return [(d, [s for s in st if s not in removed]) for d, st in routes], sorted(removed)

    # -- repair ------------------------------------------------------------
    def random_repair(self, routes, removed):
        ins = _Insertion(self.ev, [(d, list(st)) for d, st in routes if st])
        order = list(removed)
        self.rng.shuffle(order)
        for c in order:
            _, r, p = self.rng.choice(ins.options(c))
            ins.apply(c, r, p)
        return ins.routes

    def greedy_repair(self, routes, removed):
        ins = _Insertion(self.ev, [(d, list(st)) for d, st in routes if st])
        left = list(removed)
        while left:
            best = None
            for c in left:
                opt = min(ins.options(c))
                if best is None or opt[0] < best[0][0]:
                    best = (opt, c)
            (_, r, p), c = best
            ins.apply(c, r, p)
            left.remove(c)
        return ins.routes

    def regret_repair(self, routes, removed):
        ins = _Insertion(self.ev, [(d, list(st)) for d, st in routes if st])
        K = self.params.regret_k
        left = list(removed)
        while left:
            best = None
            for c in left:
                opts = sorted(ins.options(c))
                first = opts[0]
                regret = sum(o[0] - first[0] for o in opts[1:K])
                key = (regret, -first[0])
                if best is None or key > best[0]:
                    best = (key, first, c)
            _, (_, r, p), c = best
            ins.apply(c, r, p)
            left.remove(c)
        return ins.routes

    # -- main loop -----------------------------------------------------------
    def _pick(self, weights):
        return self.rng.choices(range(len(weights)), weights=weights)[0]

    def run(self) -> RoutePlan:
        ev, P = self.ev, self.params
        current = greedy_initial(ev)
        cur_cost = ev.total(current)
        best, best_cost = current, cur_cost
        self.history = [best_cost]
        wd = [1.0] * len(self.destroy_ops)
        wr = [1.0] * len(self.repair_ops)
        sd = [0.0] * len(wd)
        sr = [0.0] * len(wr)
        ud = [0] * len(wd)
        ur = [0] * len(wr)
        T = P.initial_threshold
        r1, r2, r3, r4 = P.rewards
        for it in range(1, P.iterations + 1):
            i = self._pick(wd)
            j = self._pick(wr)
            partial, removed = self.destroy_ops[i](current)
            cand = [(d, st) for d, st in self.repair_ops[j](partial, removed) if st]
            cost = ev.total(cand)
            if cost < best_cost - 1e-12:
                score = r1
                best, best_cost = cand, cost
                current, cur_cost = cand, cost
            elif cost < cur_cost - 1e-12:
                score = r2
                current, cur_cost = cand, cost
            elif cost - best_cost <= T * best_cost:
                score = r3
                current, cur_cost = cand, cost
            else:
                score = r4
            sd[i] += score
            sr[j] += score
            ud[i] += 1
            ur[j] += 1
            self.history.append(best_cost)
            if it % P.segment == 0:
                for w, s, u in ((wd, sd, ud), (wr, sr, ur)):
                    for o in range(len(w)):
                        if u[o]:
                            w[o] = max(P.min_weight, P.weight_decay * w[o] + (1 - P.weight_decay) * s[o] / u[o])
                        s[o], u[o] = 0.0, 0
                T *= P.threshold_decay
        self.weights = (wd, wr)
        return ev.to_plan(best)


def solve_alns(instance: Instance, coeffs: CostCoefficients = CostCoefficients(),
               params: AlnsParams = AlnsParams(), seed=0) -> RoutePlan:
    return AlnsSolver(instance, coeffs, params, seed).run()
