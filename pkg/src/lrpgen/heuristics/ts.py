"""Tabu search over giant tours with split decoding."""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..cost import CostCoefficients
from ..instance import Instance
from ..solution import RoutePlan
from .base import Evaluator, greedy_initial, routes_to_giant


@dataclass(frozen=True)
class TsParams:
    moves: tuple[str, ...] = ("swap1", "swap2", "reverse4", "toggle")
    tenure: int = 30
    iterations: int = 5000
    neighbourhood: int = 40

    def __post_init__(self):
        if self.tenure < 1:
            raise ValueError("tabu tenure must be at least 1")
        if self.iterations < 0 or self.neighbourhood < 1:
            raise ValueError("iteration counts must be positive")
        unknown = set(self.moves) - {"swap1", "swap2", "reverse4", "toggle"}
        if unknown:
            raise ValueError(f"unknown moves {sorted(unknown)}")


@dataclass
class MoveRecord:
    iteration: int
    kind: str
    attribute: tuple
    was_tabu: bool
    cost: float
    best_before: float


def _apply(kind, perm, mask, a, b):
    perm, mask = list(perm), list(mask)
    if kind == "swap1":
        perm[a], perm[b] = perm[b], perm[a]
    elif kind == "swap2":
        perm[a:a + 2], perm[b:b + 2] = perm[b:b + 2], perm[a:a + 2]
    elif kind == "reverse4":
        perm[a:a + 4] = perm[a:a + 4][::-1]
    else:
        mask[a] = not mask[a]
    return perm, mask


class TsSolver:
    def __init__(self, instance: Instance, coeffs: CostCoefficients = CostCoefficients(),
                 params: TsParams = TsParams(), seed=0):
        self.ev = Evaluator(instance, coeffs)
        self.params = params
        self.rng = random.Random(seed)
        self.cache: dict = {}
        self.history: list[float] = []
        self.log: list[MoveRecord] = []

    def fitness(self, perm, mask):
        if not any(mask):
            return float("inf"), None
        key = (tuple(perm), tuple(mask))
        hit = self.cache.get(key)
        if hit is None:
            routes = self.ev.decode(perm, mask)
            hit = (self.ev.total(routes), routes)
            self.cache[key] = hit
        return hit

    def _candidate(self, n, m):
        """Draw one move and its tabu attribute, or ``None`` if it does not apply."""
        kind = self.rng.choice(self.params.moves)
        rng = self.rng
        if kind == "swap1" and n >= 2:
            a, b = sorted(rng.sample(range(n), 2))
            return kind, a, b
        if kind == "swap2" and n >= 4:
            a = rng.randrange(n - 3)
            b = rng.randrange(a + 2, n - 1)
            return kind, a, b
        if kind == "reverse4" and n >= 4:
            return kind, rng.randrange(n - 3), 0
        if kind == "toggle" and m >= 2:
            return kind, rng.randrange(m), 0
        return None

    @staticmethod
    def _attribute(kind, perm, a, b):
        if kind == "toggle":
            return ("depot", a)
        if kind == "swap1":
            return ("cust",) + tuple(sorted((perm[a], perm[b])))
        if kind == "swap2":
            return ("cust",) + tuple(sorted(perm[a:a + 2] + perm[b:b + 2]))
        return ("cust",) + tuple(sorted(perm[a:a + 4]))

    def run(self) -> RoutePlan:
        P, ev = self.params, self.ev
        n, m = ev.n, ev.m
        perm, mask = routes_to_giant(greedy_initial(ev), m)
        cur_cost, _ = self.fitness(perm, mask)
        best = (cur_cost, perm, mask)
        self.history = [cur_cost]
        tabu: dict = {}
        for it in range(1, P.iterations + 1):
            choice = None
            for _ in range(P.neighbourhood):
                cand = self._candidate(n, m)
                if cand is None:
                    continue
                kind, a, b = cand
                attr = self._attribute(kind, perm, a, b)
                p2, k2 = _apply(kind, perm, mask, a, b)
                cost, _ = self.fitness(p2, k2)
                is_tabu = tabu.get(attr, 0) >= it
                if is_tabu and not cost < best[0] - 1e-12:
                    continue
                if choice is None or cost < choice[0]:
                    choice = (cost, p2, k2, kind, attr, is_tabu)
            if choice is None:
                self.history.append(best[0])
                continue
            cost, perm, mask, kind, attr, was_tabu = choice
            self.log.append(MoveRecord(it, kind, attr, was_tabu, cost, best[0]))
            tabu[attr] = it + P.tenure
            if cost < best[0]:
                best = (cost, perm, mask)
            self.history.append(best[0])
        _, routes = self.fitness(best[1], best[2])
        return ev.to_plan(routes)


def solve_ts(instance: Instance, coeffs: CostCoefficients = CostCoefficients(),
             params: TsParams = TsParams(), seed=0) -> RoutePlan:
    return TsSolver(instance, coeffs, params, seed).run()
