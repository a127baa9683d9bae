"""Route plans, conversion to and from MDP action traces, and validation.

Within a :class:`Route`, ``depot`` is a depot index ``0..m-1`` and ``stops``
are customer indices ``0..n-1``. Action traces use vertex indices, so a
customer ``e`` appears there as ``m + e``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import InfeasiblePlan, MalformedTrace
from .instance import Instance


@dataclass(frozen=True)
class Route:
    depot: int
    stops: tuple[int, ...]
    load: float = 0.0

    @classmethod
    def build(cls, depot: int, stops: Iterable[int], instance: Instance) -> "Route":
        stops = tuple(int(s) for s in stops)
        return cls(int(depot), stops, float(sum(float(instance.demand[s]) for s in stops)))


@dataclass(frozen=True)
class RoutePlan:
    routes: tuple[Route, ...]
    source_trace: tuple[int, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        ordered = tuple(sorted(self.routes, key=lambda r: (r.depot, r.stops[0] if r.stops else -1, r.stops)))
        object.__setattr__(self, "routes", ordered)

    @classmethod
    def from_lists(cls, routes: Iterable[tuple[int, Sequence[int]]], instance: Instance) -> "RoutePlan":
        return cls(tuple(Route.build(d, s, instance) for d, s in routes if len(s)))

    def depots_used(self) -> list[int]:
        return sorted({r.depot for r in self.routes if r.stops})

    def routes_of(self, depot: int) -> list[Route]:
        return [r for r in self.routes if r.depot == depot]


@dataclass
class ValidationReport:
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate(plan: RoutePlan, instance: Instance, tol: float = 1e-9) -> ValidationReport:
    """Check coverage, capacity and index ranges; collects every violation."""
    problems: list[str] = []
    seen: dict[int, int] = {}
    Q = instance.fleet.capacity
    for k, route in enumerate(plan.routes):
        if not 0 <= route.depot < instance.m:
            problems.append(f"route {k}: depot index {route.depot} out of range")
        if not route.stops:
            problems.append(f"route {k}: empty route")
        load = 0.0
        for s in route.stops:
            if not 0 <= s < instance.n:
                problems.append(f"route {k}: customer index {s} out of range")
                continue
            load += float(instance.demand[s])
            seen[s] = seen.get(s, 0) + 1
        if load > Q + tol:
            problems.append(f"route {k}: capacity exceeded ({load:.6g} > {Q:.6g})")
    for s, count in sorted(seen.items()):
        if count > 1:
            problems.append(f"customer {s} served {'twice' if count == 2 else f'{count} times'}")
    for s in range(instance.n):
        if s not in seen:
            problems.append(f"customer {s} not served")
    return ValidationReport(problems)


def trace_to_plan(trace: Sequence[int], instance: Instance) -> RoutePlan:
    """Split a completed action trace at its depot visits."""
    m, n = instance.m, instance.n
    trace = [int(a) for a in trace]
    if not trace or not 0 <= trace[0] < m:
        raise MalformedTrace("trace must start at a depot")
    departure = trace[0]
    run: list[int] = []
    routes: list[Route] = []
    served = [0] * n
    for pos, v in enumerate(trace[1:], start=1):
        if v < 0 or v >= m + n:
            raise MalformedTrace(f"position {pos}: vertex {v} out of range")
        if v < m:
            if run:
                if v != departure:
                    raise MalformedTrace(f"position {pos}: route from depot {departure} closes at depot {v}")
                routes.append(Route.build(departure, run, instance))
                run = []
            departure = v
        else:
            e = v - m
            served[e] += 1
            run.append(e)
    if run:
        raise MalformedTrace("trace ends at a customer")
    missing = [e for e, c in enumerate(served) if c == 0]
    if missing:
        raise MalformedTrace(f"customers left unserved: {missing}")
    dup = [e for e, c in enumerate(served) if c > 1]
    if dup:
        raise MalformedTrace(f"customers served more than once: {dup}")
    return RoutePlan(tuple(routes), source_trace=tuple(trace))


def plan_to_trace(plan: RoutePlan, instance: Instance) -> list[int]:
    """Depot-grouped vertex permutation that replays legally through the env.

    The environment starts at depot 0, so a plan that does not use depot 0
    begins with a zero-cost hop from it.
    """
    report = validate(plan, instance)
    if not report.ok:
        raise InfeasiblePlan("; ".join(report.violations))
    m = instance.m
    trace = [0]
    for depot in plan.depots_used():
        if trace[-1] != depot:
            trace.append(depot)
        for route in plan.routes_of(depot):
            trace.extend(m + s for s in route.stops)
            trace.append(depot)
    return trace
