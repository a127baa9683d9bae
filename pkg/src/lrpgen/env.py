"""Batch MDP environment for multi-depot route construction.

State lives in torch tensors with a leading batch axis so the neural decoder
can consume it without copies. Masks are built from whole-tensor boolean
operations only; there is no Python loop over the batch.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
import torch

from .errors import InfeasibleInstance, MaskInvariantError, MaskedAction
from .instance import Instance, InstanceBatch


@dataclass(frozen=True)
class EnvState:
    """Single-instance view of the MDP state.

    ``visit_record[j]`` is True while vertex ``j`` is still unvisited.
    """

    current_vertex: int
    departure_depot: int
    remaining_load: float
    visit_record: tuple[bool, ...]
    done: bool


class StepOutcome(NamedTuple):
    cost_increment: float
    transition_prob: float
    new_state: EnvState


class BatchState(NamedTuple):
    current: torch.Tensor  # (B,) long
    departure: torch.Tensor  # (B,) long
    load: torch.Tensor  # (B,) float64
    unvisited: torch.Tensor  # (B, V) bool
    done: torch.Tensor  # (B,) bool

    def row(self, b: int) -> EnvState:
        return EnvState(
            int(self.current[b]), int(self.departure[b]), float(self.load[b]),
            tuple(bool(x) for x in self.unvisited[b].tolist()), bool(self.done[b]),
        )

    @classmethod
    def stack(cls, states: Sequence[EnvState]) -> "BatchState":
        return cls(
            current=torch.tensor([s.current_vertex for s in states], dtype=torch.long),
            departure=torch.tensor([s.departure_depot for s in states], dtype=torch.long),
            load=torch.tensor([s.remaining_load for s in states], dtype=torch.float64),
            unvisited=torch.tensor([s.visit_record for s in states], dtype=torch.bool),
            done=torch.tensor([s.done for s in states], dtype=torch.bool),
        )


def _pairwise_step_length(coords: torch.Tensor, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    idx = torch.arange(coords.shape[0])
    pa, pb = coords[idx, a], coords[idx, b]
    dx = pa[:, 0] - pb[:, 0]
    dy = pa[:, 1] - pb[:, 1]
    return torch.sqrt(dx * dx + dy * dy)


def batch_mask(state: BatchState, demand: torch.Tensor, m: int) -> torch.Tensor:
    """Boolean action mask, True = infeasible.

    Reproduces the four state patterns: at a depot with work left the
    vehicle may take any unserved customer or any unplanned depot; at a
    customer it may take unserved customers that fit the remaining load or
    return to its departure depot; once everything is served the only
    option is the departure depot (a self-loop when already there).
    """
    visited = ~state.unvisited
    mask = visited | (demand > state.load[:, None])
    dep_cols = torch.arange(m)
    # every depot masked except the departure depot of the current route
    depot_mask = dep_cols[None, :] != state.departure[:, None]
    all_served = ~state.unvisited[:, m:].any(dim=1)
    at_depot = state.current < m
    reopen = at_depot & ~all_served
    # new route from a depot: offer the depots not yet planned, hide the current one
    depot_mask = torch.where(reopen[:, None], visited[:, :m], depot_mask)
    return torch.cat([depot_mask, mask[:, m:]], dim=1)


class BatchEnv:
    """Vectorised environment over an :class:`InstanceBatch`."""

    def __init__(self, batch: InstanceBatch):
        if batch.m < 1:
            raise InfeasibleInstance("route construction needs at least one depot")
        if np.any(batch.demand > batch.capacity[:, None]):
            raise InfeasibleInstance("a customer demand exceeds the vehicle capacity")
        self.batch = batch
        self.m, self.n = batch.m, batch.n
        self.coords = torch.as_tensor(batch.coords, dtype=torch.float64)
        self.demand = torch.as_tensor(batch.vertex_demand, dtype=torch.float64)
        self.capacity = torch.as_tensor(batch.capacity, dtype=torch.float64)

    @property
    def size(self) -> int:
        return self.batch.size

    def reset(self) -> BatchState:
        B, V = self.size, self.m + self.n
        unvisited = torch.ones(B, V, dtype=torch.bool)
        unvisited[:, 0] = False
        return BatchState(
            current=torch.zeros(B, dtype=torch.long),
            departure=torch.zeros(B, dtype=torch.long),
            load=self.capacity.clone(),
            unvisited=unvisited,
            done=torch.zeros(B, dtype=torch.bool),
        )

    def mask(self, state: BatchState, check: bool = True) -> torch.Tensor:
        mask = batch_mask(state, self.demand, self.m)
        if check:
            stuck = mask.all(dim=1) & ~state.done
            if bool(stuck.any()):
                rows = torch.nonzero(stuck).flatten().tolist()
                raise MaskInvariantError(f"all actions masked in unfinished rows {rows}")
        return mask

    def step(self, state: BatchState, action: torch.Tensor, mask: torch.Tensor | None = None):
        """Apply one action per row; returns ``(new_state, cost_increment)``."""
        action = torch.as_tensor(action, dtype=torch.long)
        if mask is None:
            mask = self.mask(state, check=False)
        rows = torch.arange(self.size)
        bad = mask[rows, action]
        if bool(bad.any()):
            b = int(torch.nonzero(bad)[0])
            raise MaskedAction(f"row {b}: action {int(action[b])} is masked")
        m = self.m
        cur_depot = state.current < m
        act_depot = action < m
        length = _pairwise_step_length(self.coords, state.current, action)
        cost = torch.where(cur_depot & act_depot, torch.zeros_like(length), length)
        load = torch.where(act_depot, self.capacity, state.load - self.demand[rows, action])
        departure = torch.where(act_depot, action, state.departure)
        unvisited = state.unvisited.clone()
        unvisited[rows, action] = False
        all_served = ~unvisited[:, m:].any(dim=1)
        done = all_served & act_depot
        return BatchState(action, departure, load, unvisited, done), cost


class Trajectory(NamedTuple):
    """Result of a batch rollout; step tensors have shape ``(B, T)``."""

    actions: torch.Tensor
    departures: torch.Tensor
    costs: torch.Tensor
    log_probs: torch.Tensor | None
    steps: torch.Tensor  # (B,) number of steps up to and including termination

    def trace(self, b: int) -> list[int]:
        """Action trace of row ``b`` starting at depot 0, padding removed."""
        return [0] + self.actions[b, : int(self.steps[b])].tolist()

    @property
    def total_length(self) -> torch.Tensor:
        return self.costs.sum(dim=1)


Selector = Callable[[BatchState, torch.Tensor, int], "tuple[torch.Tensor, torch.Tensor | None]"]


def run_batch(env: BatchEnv, select: Selector, max_steps: int | None = None) -> Trajectory:
    """Roll the batch forward until every row is done.

    ``select(state, mask, t)`` returns ``(actions, log_probs_or_None)``.
    Finished rows keep taking the depot self-loop, which costs nothing.
    """
    if max_steps is None:
        max_steps = 2 * env.n + env.m + 2
    state = env.reset()
    steps = torch.zeros(env.size, dtype=torch.long)
    actions, departures, costs, logps = [], [], [], []
    for t in range(max_steps):
        if bool(state.done.all()):
            break
        mask = env.mask(state)
        action, logp = select(state, mask, t)
        steps = steps + (~state.done).long()
        state, cost = env.step(state, action, mask)
        actions.append(action)
        departures.append(state.departure)
        costs.append(cost)
        if logp is not None:
            logps.append(logp)
    else:
        if not bool(state.done.all()):
            raise MaskInvariantError("rollout did not terminate within the step bound")
    if not actions:
        empty = torch.zeros(env.size, 0, dtype=torch.long)
        return Trajectory(empty, empty, torch.zeros(env.size, 0, dtype=torch.float64), None, steps)
    return Trajectory(
        torch.stack(actions, 1), torch.stack(departures, 1), torch.stack(costs, 1),
        torch.stack(logps, 1) if logps else None, steps,
    )


def random_selector(generator: torch.Generator) -> Selector:
    """Uniformly random feasible action per row."""

    def select(state, mask, t):
        weights = (~mask).to(torch.float64)
        return torch.multinomial(weights, 1, generator=generator).squeeze(1), None

    return select


# ---------------------------------------------------------------------------
# single-instance API


def _single(instance: Instance) -> BatchEnv:
    return BatchEnv(InstanceBatch.from_instances([instance]))


def reset(instance: Instance) -> EnvState:
    return _single(instance).reset().row(0)


def compute_mask(states, instance) -> np.ndarray:
    """Mask for a batch of states.

    ``states`` may be a :class:`BatchState` or a sequence of
    :class:`EnvState`; ``instance`` an :class:`Instance` shared by all rows
    or an :class:`InstanceBatch` aligned with them.
    """
    if not isinstance(states, BatchState):
        states = BatchState.stack(list(states))
    if isinstance(instance, Instance):
        instance = InstanceBatch.from_instances([instance] * int(states.current.shape[0]))
    env = BatchEnv(instance)
    return env.mask(states).numpy()


def step(state: EnvState, action: int, instance: Instance, transition_prob: float = 1.0) -> StepOutcome:
    env = _single(instance)
    new, cost = env.step(BatchState.stack([state]), torch.tensor([int(action)]))
    return StepOutcome(float(cost[0]), float(transition_prob), new.row(0))


class Rollout(NamedTuple):
    actions: list[int]
    probs: list[float]
    total_cost: float


def rollout(instance: Instance, policy, seed=None, max_steps: int | None = None) -> Rollout:
    """Run one episode with a Python callback policy.

    ``policy(state, mask, rng)`` returns an action index, or a pair
    ``(action, probability)``. The returned action trace starts with the
    initial depot and stops at the first terminal state.
    """
    env = _single(instance)
    rng = np.random.default_rng(seed)
    if max_steps is None:
        max_steps = 2 * instance.n + instance.m + 2
    state = env.reset()
    actions, probs, total = [0], [], 0.0
    for _ in range(max_steps):
        if bool(state.done[0]):
            break
        mask = env.mask(state)
        out = policy(state.row(0), mask[0].numpy().copy(), rng)
        action, prob = (out if isinstance(out, tuple) else (out, 1.0))
        state, cost = env.step(state, torch.tensor([int(action)]), mask)
        actions.append(int(action))
        probs.append(float(prob))
        total += float(cost[0])
    else:
        if not bool(state.done[0]):
            raise MaskInvariantError("rollout did not terminate within the step bound")
    return Rollout(actions, probs, total)
