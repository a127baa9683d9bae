"""Attention policy that builds multi-depot routes one vertex at a time."""
from __future__ import annotations

import math
from typing import NamedTuple

import torch
from torch import nn

from ..cost import CostCoefficients, cost_sel, trajectory_costs
from ..env import BatchEnv, BatchState, Trajectory, run_batch
from ..errors import AllMasked, ShapeMismatch
from ..instance import Instance, InstanceBatch
from ..solution import RoutePlan, trace_to_plan
from .core import EMBED_DIM, FF_DIM, N_HEADS, N_LAYERS, Encoder, MultiHeadAttention, gather_rows, linear


class Fixed(NamedTuple):
    """Per-episode tensors computed once after encoding."""

    embeddings: torch.Tensor  # (B, V, d)
    mean: torch.Tensor  # (B, d)
    glimpse_k: torch.Tensor  # (B, H, V, dk)
    glimpse_v: torch.Tensor
    logit_k: torch.Tensor  # (B, V, d)


def batch_features(batch: InstanceBatch, dtype=torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
    """Depot inputs ``[x, y]`` and customer inputs ``[x, y, q/Q]``."""
    depot = torch.as_tensor(batch.depot_xy, dtype=dtype)
    q = torch.as_tensor(batch.demand / batch.capacity[:, None], dtype=dtype)
    cust = torch.cat([torch.as_tensor(batch.customer_xy, dtype=dtype), q.unsqueeze(-1)], dim=-1)
    return depot, cust


class Mdlram(nn.Module):
    def __init__(self, dim: int = EMBED_DIM, heads: int = N_HEADS, layers: int = N_LAYERS,
                 ff: int = FF_DIM, tanh_clip: float | None = None):
        super().__init__()
        self.config = {"dim": dim, "heads": heads, "layers": layers, "ff": ff, "tanh_clip": tanh_clip}
        self.dim = dim
        self.tanh_clip = tanh_clip
        self.depot_embed = linear(2, dim)
        self.customer_embed = linear(3, dim)
        self.encoder = Encoder(dim, heads, layers, ff)
        self.context = linear(3 * dim + 1, dim)
        self.glimpse = MultiHeadAttention(dim, heads)
        self.logit_key = linear(dim, dim, bias=False)
        self.logit_query = linear(dim, dim, bias=False)

    @property
    def dtype(self):
        return self.context.weight.dtype

    def encode(self, depot_feats: torch.Tensor, cust_feats: torch.Tensor) -> torch.Tensor:
        if depot_feats.shape[-1] != 2 or cust_feats.shape[-1] != 3:
            raise ShapeMismatch("depots need [x, y] and customers [x, y, q] inputs")
        if depot_feats.shape[0] != cust_feats.shape[0]:
            raise ShapeMismatch("depot and customer batches differ in size")
        h = torch.cat([self.depot_embed(depot_feats), self.customer_embed(cust_feats)], dim=1)
        return self.encoder(h)

    def encode_batch(self, batch: InstanceBatch) -> torch.Tensor:
        return self.encode(*batch_features(batch, self.dtype))

    def precompute(self, emb: torch.Tensor) -> Fixed:
        g = self.glimpse
        return Fixed(emb, emb.mean(dim=1), g.split(g.wk(emb)), g.split(g.wv(emb)), self.logit_key(emb))

    def build_context(self, fixed: Fixed, state: BatchState, capacity: torch.Tensor) -> torch.Tensor:
        emb = fixed.embeddings
        load = (state.load / capacity).to(emb.dtype).unsqueeze(-1)
        parts = [fixed.mean, gather_rows(emb, state.current), gather_rows(emb, state.departure), load]
        return self.context(torch.cat(parts, dim=-1))

    def logits(self, fixed: Fixed, context: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Raw compatibility scores with masked entries at ``-inf``."""
        g = self.glimpse
        q = g.split(g.wq(context).unsqueeze(1))  # (B, H, 1, dk)
        glimpse = g.attend(q, fixed.glimpse_k, fixed.glimpse_v, mask.unsqueeze(1)).squeeze(1)
        u = (self.logit_query(glimpse).unsqueeze(1) @ fixed.logit_k.transpose(1, 2)).squeeze(1)
        u = u / math.sqrt(self.dim)
        if self.tanh_clip is not None:
            u = self.tanh_clip * torch.tanh(u)
        return u.masked_fill(mask, float("-inf"))

    def decode_step(self, fixed: Fixed, context: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Log-probabilities over all vertices; masked entries are ``-inf``."""
        full = mask.all(dim=1)
        if bool(full.any()):
            raise AllMasked(f"every action masked in rows {torch.nonzero(full).flatten().tolist()}")
        return torch.log_softmax(self.logits(fixed, context, mask), dim=-1)

    def selector(self, fixed: Fixed, env: BatchEnv, mode: str = "greedy", generator: torch.Generator | None = None):
        capacity = env.capacity

        def select(state, mask, t):
            logp = self.decode_step(fixed, self.build_context(fixed, state, capacity), mask)
            if mode == "greedy":
                action = greedy_argmax(logp)
            elif mode == "sample":
                action = torch.multinomial(logp.detach().exp(), 1, generator=generator).squeeze(1)
            else:
                raise ValueError(f"unknown decoding mode {mode!r}")
            return action, logp.gather(1, action[:, None]).squeeze(1)

        return select


def greedy_argmax(scores: torch.Tensor) -> torch.Tensor:
    """Row-wise argmax, ties resolved to the lowest index."""
    best = scores.max(dim=1, keepdim=True).values
    hit = scores == best
    idx = torch.arange(scores.shape[1]).expand_as(scores)
    return torch.where(hit, idx, scores.shape[1]).min(dim=1).values


class PolicyRollout(NamedTuple):
    trajectory: Trajectory
    log_prob: torch.Tensor  # (B,) sum of per-step log-probabilities
    cost: object  # BatchCost


def rollout_batch(model: Mdlram, batch: InstanceBatch, mode: str = "greedy",
                  generator: torch.Generator | None = None,
                  coeffs: CostCoefficients = CostCoefficients()) -> PolicyRollout:
    env = BatchEnv(batch)
    fixed = model.precompute(model.encode_batch(batch))
    traj = run_batch(env, model.selector(fixed, env, mode, generator))
    logp = traj.log_probs.sum(dim=1) if traj.log_probs is not None else torch.zeros(batch.size)
    return PolicyRollout(traj, logp, trajectory_costs(traj, batch, coeffs))


def trace_log_prob(model: Mdlram, batch: InstanceBatch, actions: torch.Tensor) -> torch.Tensor:
    """Log-probability of given action sequences ``(B, T)`` (teacher forcing).

    Rows shorter than ``T`` must be padded with their closing depot.
    """
    env = BatchEnv(batch)
    fixed = model.precompute(model.encode_batch(batch))
    state = env.reset()
    total = torch.zeros(batch.size, dtype=model.dtype)
    for t in range(actions.shape[1]):
        mask = env.mask(state)
        logp = model.decode_step(fixed, model.build_context(fixed, state, env.capacity), mask)
        a = actions[:, t]
        total = total + logp.gather(1, a[:, None]).squeeze(1)
        state, _ = env.step(state, a, mask)
    return total


def solve_greedy(instance: Instance, model: Mdlram, coeffs: CostCoefficients = CostCoefficients()) -> RoutePlan:
    with torch.no_grad():
        out = rollout_batch(model, InstanceBatch.from_instances([instance]), "greedy", coeffs=coeffs)
    return trace_to_plan(out.trajectory.trace(0), instance)


def solve_sampling(instance: Instance, model: Mdlram, k: int, seed=0,
                   coeffs: CostCoefficients = CostCoefficients()) -> RoutePlan:
    """Best of ``k`` sampled rollouts and the greedy rollout.

    Candidates are compared on the selection objective; ties keep the
    greedy plan, then the earliest sample.
    """
    if k < 1:
        raise ValueError("need at least one sample")
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        greedy = rollout_batch(model, InstanceBatch.from_instances([instance]), "greedy", coeffs=coeffs)
        samples = rollout_batch(model, InstanceBatch.from_instances([instance] * k), "sample", gen, coeffs)
    best = trace_to_plan(greedy.trajectory.trace(0), instance)
    best_cost = cost_sel(best, instance, coeffs).total
    totals = samples.cost.total
    # batch totals pick the shortlist; the exact scalar cost makes the final call
    for j in torch.nonzero(totals <= totals.min() + 1e-9).flatten().tolist():
        plan = trace_to_plan(samples.trajectory.trace(j), instance)
        c = cost_sel(plan, instance, coeffs).total
        if c < best_cost:
            best, best_cost = plan, c
    return best
