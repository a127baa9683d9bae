"""Problem data model, synthetic sampling and scale presets.

Vertex indexing follows the convention used everywhere in the package:
depots occupy ``0..m-1`` and customers ``m..m+n-1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Customer:
    position: tuple[float, float]
    demand: float


@dataclass(frozen=True)
class DepotCandidate:
    position: tuple[float, float]
    max_supply: float
    opening_cost: float


@dataclass(frozen=True)
class FleetConfig:
    capacity: float
    setup_cost: float = 0.3

    def __post_init__(self):
        if not self.capacity > 0:
            raise ValueError("vehicle capacity must be positive")
        if self.setup_cost < 0:
            raise ValueError("vehicle setup cost must be non-negative")


def _frozen(a, shape_tail=()) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if shape_tail and arr.size == 0:
        arr = arr.reshape((0,) + shape_tail)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Instance:
    """An LRP instance held as float64 arrays.

    ``normalized=False`` marks instances kept in raw benchmark coordinates;
    those skip the unit-square check but are otherwise identical.
    """

    customer_xy: np.ndarray
    demand: np.ndarray
    depot_xy: np.ndarray
    max_supply: np.ndarray
    opening_cost: np.ndarray
    fleet: FleetConfig
    name: str = ""
    normalized: bool = True

    def __post_init__(self):
        object.__setattr__(self, "customer_xy", _frozen(self.customer_xy, (2,)))
        object.__setattr__(self, "demand", _frozen(self.demand))
        object.__setattr__(self, "depot_xy", _frozen(self.depot_xy, (2,)))
        object.__setattr__(self, "max_supply", _frozen(self.max_supply))
        object.__setattr__(self, "opening_cost", _frozen(self.opening_cost))
        n, m = self.n, self.m
        if n < 1:
            raise ValueError("an instance needs at least one customer")
        if self.customer_xy.shape != (n, 2) or self.demand.shape != (n,):
            raise ValueError("customer arrays have inconsistent shapes")
        if self.depot_xy.shape != (m, 2) or self.max_supply.shape != (m,) or self.opening_cost.shape != (m,):
            raise ValueError("depot arrays have inconsistent shapes")
        if np.any(self.demand < 0):
            raise ValueError("demands must be non-negative")
        if m and (np.any(self.max_supply <= 0) or np.any(self.opening_cost < 0)):
            raise ValueError("depot supply must be positive and opening cost non-negative")
        if self.normalized:
            for arr in (self.customer_xy, self.depot_xy):
                if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
                    raise ValueError("coordinates must lie in the unit square")

    @property
    def n(self) -> int:
        return int(self.customer_xy.shape[0])

    @property
    def m(self) -> int:
        return int(self.depot_xy.shape[0])

    @property
    def coords(self) -> np.ndarray:
        """All vertex coordinates, depots first, shape ``(m+n, 2)``."""
        return np.concatenate([self.depot_xy, self.customer_xy], axis=0)

    @property
    def vertex_demand(self) -> np.ndarray:
        return np.concatenate([np.zeros(self.m), self.demand])

    @property
    def customers(self) -> list[Customer]:
        return [Customer((float(x), float(y)), float(q)) for (x, y), q in zip(self.customer_xy, self.demand)]

    @property
    def depots(self) -> list[DepotCandidate]:
        return [
            DepotCandidate((float(x), float(y)), float(M), float(O))
            for (x, y), M, O in zip(self.depot_xy, self.max_supply, self.opening_cost)
        ]

    @classmethod
    def from_records(cls, customers: Sequence[Customer], depots: Sequence[DepotCandidate],
                     fleet: FleetConfig, **kw) -> "Instance":
        return cls(
            customer_xy=[c.position for c in customers],
            demand=[c.demand for c in customers],
            depot_xy=[d.position for d in depots],
            max_supply=[d.max_supply for d in depots],
            opening_cost=[d.opening_cost for d in depots],
            fleet=fleet,
            **kw,
        )

    def with_depots(self, depot_xy, max_supply=None, opening_cost=None) -> "Instance":
        """Copy of this instance with a different depot set."""
        depot_xy = np.asarray(depot_xy, dtype=np.float64).reshape(-1, 2)
        m = depot_xy.shape[0]
        if max_supply is None:
            max_supply = np.full(m, np.inf)
        if opening_cost is None:
            opening_cost = np.zeros(m)
        return replace(self, depot_xy=depot_xy, max_supply=max_supply, opening_cost=opening_cost)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.fleet == other.fleet
            and self.name == other.name
            and self.normalized == other.normalized
            and all(
                a.shape == b.shape and a.tobytes() == b.tobytes()
                for a, b in zip(self._arrays(), other._arrays())
            )
        )

    __hash__ = None

    def _arrays(self):
        return (self.customer_xy, self.demand, self.depot_xy, self.max_supply, self.opening_cost)


@dataclass(frozen=True)
class ScalePreset:
    name: str
    n: int
    m: int
    capacity: float
    supply_range: tuple[float, float]
    opening_range: tuple[float, float]
    demand_range: tuple[float, float] = (0.0, 10.0)
    setup_cost: float = 0.3

    def __post_init__(self):
        if self.n < 1 or self.m < 0:
            raise ValueError("preset counts must be positive")
        for lo, hi in (self.supply_range, self.opening_range, self.demand_range):
            if not lo <= hi:
                raise ValueError("preset ranges must be ordered")
        if self.supply_range[0] <= 0:
            raise ValueError("supply range must be positive")
        if self.demand_range[1] > self.capacity:
            raise ValueError("demands could exceed vehicle capacity")

    def resized(self, n: int | None = None, m: int | None = None) -> "ScalePreset":
        return replace(self, n=self.n if n is None else n, m=self.m if m is None else m)


PRESETS: dict[str, ScalePreset] = {
    "20": ScalePreset("20", 20, 3, 30.0, (50.0, 80.0), (2.0, 5.0)),
    "50": ScalePreset("50", 50, 6, 40.0, (80.0, 120.0), (2.0, 5.0)),
    "100": ScalePreset("100", 100, 9, 50.0, (120.0, 170.0), (12.0, 19.0)),
    # desk-scale presets used for training smoke runs and oracle comparisons
    "toy": ScalePreset("toy", 10, 2, 20.0, (30.0, 50.0), (1.0, 3.0)),
    "tiny": ScalePreset("tiny", 7, 2, 20.0, (15.0, 30.0), (1.0, 3.0)),
}


def get_preset(name: str) -> ScalePreset:
    try:
        return PRESETS[str(name)]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def _draw(preset: ScalePreset, rng: np.random.Generator, batch: int | None):
    lead = () if batch is None else (batch,)
    n, m = preset.n, preset.m
    cxy = rng.uniform(0.0, 1.0, size=lead + (n, 2))
    q = rng.uniform(*preset.demand_range, size=lead + (n,))
    dxy = rng.uniform(0.0, 1.0, size=lead + (m, 2))
    M = rng.uniform(*preset.supply_range, size=lead + (m,))
    O = rng.uniform(*preset.opening_range, size=lead + (m,))
    return cxy, q, dxy, M, O


def sample_instance(preset: ScalePreset, seed=None) -> Instance:
    """Uniform synthetic instance; deterministic for a fixed seed."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    cxy, q, dxy, M, O = _draw(preset, rng, None)
    return Instance(cxy, q, dxy, M, O, FleetConfig(preset.capacity, preset.setup_cost))


@dataclass(frozen=True)
class InstanceBatch:
    """Equal-sized instances stacked along a leading batch axis."""

    customer_xy: np.ndarray  # (B, n, 2)
    demand: np.ndarray  # (B, n)
    depot_xy: np.ndarray  # (B, m, 2)
    max_supply: np.ndarray  # (B, m)
    opening_cost: np.ndarray  # (B, m)
    capacity: np.ndarray  # (B,)
    setup_cost: np.ndarray = field(default=None)  # (B,)

    def __post_init__(self):
        if self.setup_cost is None:
            object.__setattr__(self, "setup_cost", np.zeros_like(self.capacity))

    @property
    def size(self) -> int:
        return int(self.customer_xy.shape[0])

    @property
    def n(self) -> int:
        return int(self.customer_xy.shape[1])

    @property
    def m(self) -> int:
        return int(self.depot_xy.shape[1])

    @property
    def coords(self) -> np.ndarray:
        return np.concatenate([self.depot_xy, self.customer_xy], axis=1)

    @property
    def vertex_demand(self) -> np.ndarray:
        return np.concatenate([np.zeros((self.size, self.m)), self.demand], axis=1)

    @classmethod
    def from_instances(cls, instances: Sequence[Instance]) -> "InstanceBatch":
        return cls(
            customer_xy=np.stack([i.customer_xy for i in instances]),
            demand=np.stack([i.demand for i in instances]),
            depot_xy=np.stack([i.depot_xy for i in instances]),
            max_supply=np.stack([i.max_supply for i in instances]),
            opening_cost=np.stack([i.opening_cost for i in instances]),
            capacity=np.array([i.fleet.capacity for i in instances], dtype=np.float64),
            setup_cost=np.array([i.fleet.setup_cost for i in instances], dtype=np.float64),
        )

    def __getitem__(self, b: int) -> Instance:
        return Instance(
            self.customer_xy[b], self.demand[b], self.depot_xy[b], self.max_supply[b],
            self.opening_cost[b], FleetConfig(float(self.capacity[b]), float(self.setup_cost[b])),
        )

    def with_depots(self, depot_xy: np.ndarray) -> "InstanceBatch":
        """Replace depots by generated ones (no opening cost, unbounded supply)."""
        depot_xy = np.asarray(depot_xy, dtype=np.float64)
        B, m = depot_xy.shape[:2]
        return replace(self, depot_xy=depot_xy, max_supply=np.full((B, m), np.inf),
                       opening_cost=np.zeros((B, m)))

    def repeat(self, k: int) -> "InstanceBatch":
        """Each instance repeated ``k`` times consecutively."""
        r = lambda a: np.repeat(a, k, axis=0)
        return InstanceBatch(r(self.customer_xy), r(self.demand), r(self.depot_xy), r(self.max_supply),
                             r(self.opening_cost), r(self.capacity), r(self.setup_cost))


def sample_batch(preset: ScalePreset, batch: int, rng: np.random.Generator) -> InstanceBatch:
    cxy, q, dxy, M, O = _draw(preset, rng, batch)
    return InstanceBatch(cxy, q, dxy, M, O, np.full(batch, preset.capacity), np.full(batch, preset.setup_cost))


def distance(a, b) -> float:
    # same operation order as distance_matrix so both agree bit-for-bit
    dx = float(a[0]) - float(b[0])
    dy = float(a[1]) - float(b[1])
    return math.sqrt(dx * dx + dy * dy)


def distance_matrix(instance: Instance) -> np.ndarray:
    xy = instance.coords
    dx = xy[:, None, 0] - xy[None, :, 0]
    dy = xy[:, None, 1] - xy[None, :, 1]
    return np.sqrt(dx * dx + dy * dy)
