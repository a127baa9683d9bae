"""Genetic algorithm over giant tours with split decoding."""
from __future__ import annotations

import random
from dataclasses import dataclass

from ..cost import CostCoefficients
from ..instance import Instance
from ..solution import RoutePlan
from .base import Evaluator, greedy_initial, routes_to_giant


@dataclass(frozen=True)
class GaParams:
    population: int = 100
    mutation_prob: float = 0.2
    crossover_prob: float = 0.6
    generations: int = 500
    elite: int = 2

    def __post_init__(self):
        if not (0 <= self.mutation_prob <= 1 and 0 <= self.crossover_prob <= 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.population < 2 or self.generations < 0:
            raise ValueError("population must hold at least two individuals")


def order_crossover(a: list, b: list, rng: random.Random) -> list:
    """OX: keep a slice of ``a`` and fill the rest in ``b``'s order."""
    n = len(a)
    if n < 2:
        return list(a)
    i, j = sorted(rng.sample(range(n + 1), 2))
    keep = set(a[i:j])
    fill = [c for c in b if c not in keep]
    return fill[:i] + a[i:j] + fill[i:]


class GaSolver:
    def __init__(self, instance: Instance, coeffs: CostCoefficients = CostCoefficients(),
                 params: GaParams = GaParams(), seed=0):
        self.ev = Evaluator(instance, coeffs)
        self.params = params
        self.rng = random.Random(seed)
        self.cache: dict = {}
        self.history: list[float] = []

    def fitness(self, perm, mask):
        """Decode and score; an all-closed mask is repaired by opening one depot."""
        if not any(mask):
            mask = list(mask)
            mask[self.rng.randrange(self.ev.m)] = True
        key = (tuple(perm), tuple(mask))
        hit = self.cache.get(key)
        if hit is None:
            routes = self.ev.decode(perm, mask)
            hit = (self.ev.total(routes), routes, tuple(mask))
            self.cache[key] = hit
        return hit

    def _mutate(self, perm, mask):
        rng, n, m = self.rng, len(perm), len(mask)
        perm, mask = list(perm), list(mask)
        op = rng.randrange(3)
        if n >= 2 and op == 0:
            i, j = rng.sample(range(n), 2)
            perm[i], perm[j] = perm[j], perm[i]
        elif n >= 2 and op == 1:
            i, j = sorted(rng.sample(range(n + 1), 2))
            perm[i:j] = perm[i:j][::-1]
        else:
            k = rng.randrange(m)
            mask[k] = not mask[k]
        return perm, mask

    def _random_individual(self):
        perm = list(range(self.ev.n))
        self.rng.shuffle(perm)
        mask = [self.rng.random() < 0.5 for _ in range(self.ev.m)]
        return perm, mask

    def run(self) -> RoutePlan:
        P, rng, m = self.params, self.rng, self.ev.m
        seed_perm, seed_mask = routes_to_giant(greedy_initial(self.ev), m)
        pop = [(seed_perm, [True] * m), (seed_perm, seed_mask)]
        while len(pop) < P.population:
            pop.append(self._random_individual())
        scored = []
        for perm, mask in pop:
            f, _, mask = self.fitness(perm, mask)
            scored.append((f, perm, list(mask)))
        scored.sort(key=lambda s: s[0])
        best = scored[0]
        self.history = [best[0]]

        def tournament():
            a, b = rng.randrange(len(scored)), rng.randrange(len(scored))
            return scored[min(a, b)]  # scored is sorted, lower index is fitter

        for _ in range(P.generations):
            nxt = [(f, p, k) for f, p, k in scored[:P.elite]]
            while len(nxt) < P.population:
                _, pa, ma = tournament()
                _, pb, mb = tournament()
                if rng.random() < P.crossover_prob:
                    perm = order_crossover(pa, pb, rng)
                    mask = [x if rng.random() < 0.5 else y for x, y in zip(ma, mb)]
                else:
                    perm, mask = list(pa), list(ma)
                if rng.random() < P.mutation_prob:
                    perm, mask = self._mutate(perm, mask)
                f, _, mask = self.fitness(perm, mask)
                nxt.append((f, perm, list(mask)))
            nxt.sort(key=lambda s: s[0])
            scored = nxt
            if scored[0][0] < best[0]:
                best = scored[0]
            self.history.append(best[0])
        self.population = scored
        _, routes, _ = self.fitness(best[1], best[2])
        return self.ev.to_plan(routes)


def solve_ga(instance: Instance, coeffs: CostCoefficients = CostCoefficients(),
             params: GaParams = GaParams(), seed=0) -> RoutePlan:
    return GaSolver(instance, coeffs, params, seed).run()
