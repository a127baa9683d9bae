"""Policy-gradient training for the routing policy and the depot generator."""
from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import torch
from scipy import stats

from .cost import CostCoefficients, batch_balance_penalty, batch_depot_penalties
from .errors import Divergence
from .instance import InstanceBatch, ScalePreset, get_preset, sample_batch
from .neural.core import use_single_thread
from .neural.dgm import Dgm, customer_features, gaussian_log_prob, sample_depots
from .neural.mdlram import Mdlram, rollout_batch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    batches_per_epoch: int = 300
    batch_size: int = 64
    main_batch: int = 8
    sub_batch: int = 16
    samples: int = 16
    lr: float = 1e-4
    clip_norm: float = 1.0
    eval_interval: int = 100
    eval_size: int = 256
    significance: float = 0.05
    seed: int = 0
    sub_batch_baseline: bool = False
    preset: str = "toy"

    def __post_init__(self):
        for name in ("epochs", "batches_per_epoch", "batch_size", "main_batch", "sub_batch",
                     "samples", "eval_interval", "eval_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not self.lr > 0 or not self.clip_norm > 0:
            raise ValueError("learning rate and clip norm must be positive")


@dataclass
class TrainResult:
    model: torch.nn.Module
    curve: list[float] = field(default_factory=list)
    metrics: list[dict] = field(default_factory=list)
    baseline_updates: list[int] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)


class MetricsLog:
    """Collects metric records and optionally appends them as JSON lines."""

    def __init__(self, path=None):
        self.records: list[dict] = []
        self.path = path

    def write(self, **record):
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def _resolve(preset) -> ScalePreset:
    return preset if isinstance(preset, ScalePreset) else get_preset(preset)


def _check_finite(value: float, what: str):
    if not math.isfinite(value):
        raise Divergence(f"{what} became non-finite ({value})")


def _optimizer_step(model, opt, loss, clip_norm) -> float:
    opt.zero_grad()
    loss.backward()
    norm = float(torch.nn.utils.clip_grad_norm_(model.parameters(), clip_norm))
    opt.step()
    return norm


def greedy_costs(model: Mdlram, batch: InstanceBatch, objective: Callable,
                 chunk: int = 1024) -> torch.Tensor:
    """Objective values of greedy rollouts, evaluated in chunks without gradients."""
    out = []
    with torch.no_grad():
        for s in range(0, batch.size, chunk):
            part = _slice(batch, s, s + chunk)
            out.append(objective(rollout_batch(model, part, "greedy").cost))
    return torch.cat(out)


def _slice(batch: InstanceBatch, a: int, b: int) -> InstanceBatch:
    return InstanceBatch(batch.customer_xy[a:b], batch.demand[a:b], batch.depot_xy[a:b],
                         batch.max_supply[a:b], batch.opening_cost[a:b], batch.capacity[a:b],
                         batch.setup_cost[a:b])


def selection_objective(cost) -> torch.Tensor:
    return cost.total


def balanced_objective(proportions) -> Callable:
    def objective(cost):
        return cost.total + batch_balance_penalty(cost.depot_lengths, cost.depot_vehicles > 0, proportions)

    return objective


def reinforce_loss(cost: torch.Tensor, baseline: torch.Tensor, log_prob: torch.Tensor) -> torch.Tensor:
    """Mean of ``(cost - baseline) * log p``; the advantage carries no gradient."""
    adv = (cost - baseline).detach().to(log_prob.dtype)
    return (adv * log_prob).mean()


def paired_improvement(policy_costs, baseline_costs) -> float:
    """One-sided paired t-test p-value for ``policy < baseline``; 1.0 when undefined."""
    diff = np.asarray(policy_costs) - np.asarray(baseline_costs)
    if np.allclose(diff, diff[0]) and diff[0] == 0:
        return 1.0
    res = stats.ttest_rel(policy_costs, baseline_costs, alternative="less")
    p = float(res.pvalue)
    return p if math.isfinite(p) else 1.0


def _reinforce(model: Mdlram, config: TrainConfig, preset: ScalePreset, coeffs: CostCoefficients,
               objective: Callable, log: MetricsLog, tag: str) -> TrainResult:
    use_single_thread()
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    gen = torch.Generator().manual_seed(config.seed)
    eval_set = sample_batch(preset, config.eval_size, np.random.default_rng(config.seed + 10_000))
    baseline = copy.deepcopy(model).eval()
    for p in baseline.parameters():
        p.requires_grad_(False)
    base_eval = greedy_costs(baseline, eval_set, objective)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    result = TrainResult(model)
    step = 0
    for epoch in range(config.epochs):
        for b in range(config.batches_per_epoch):
            batch = sample_batch(preset, config.batch_size, rng)
            out = rollout_batch(model, batch, "sample", gen, coeffs)
            cost = objective(out.cost)
            with torch.no_grad():
                base = objective(rollout_batch(baseline, batch, "greedy", coeffs=coeffs).cost)
            mean_cost = float(cost.mean())
            _check_finite(mean_cost, "mean training cost")
            norm = _optimizer_step(model, opt, reinforce_loss(cost, base, out.log_prob), config.clip_norm)
            step += 1
            result.curve.append(mean_cost)
            result.grad_norms.append(norm)
            record = {"run": tag, "epoch": epoch, "batch": b, "mean_cost": mean_cost,
                      "baseline_cost": float(base.mean()), "length": float(out.cost.route_length.mean()),
                      "vehicles": float(out.cost.vehicles.mean()), "depots": float(out.cost.depots_opened.mean()),
                      "grad_norm": norm}
            if step % config.eval_interval == 0:
                pol_eval = greedy_costs(model, eval_set, objective)
                p = paired_improvement(pol_eval.numpy(), base_eval.numpy())
                record.update(eval_cost=float(pol_eval.mean()), eval_baseline=float(base_eval.mean()), p_value=p)
                if p < config.significance:
                    baseline.load_state_dict(model.state_dict())
                    base_eval = pol_eval
                    result.baseline_updates.append(step)
            log.write(**record)
    result.metrics = log.records
    result.baseline = baseline
    return result


def train_mdlram(config: TrainConfig = TrainConfig(), preset=None, model: Mdlram | None = None,
                 coeffs: CostCoefficients = CostCoefficients(), log_path=None) -> TrainResult:
    """REINFORCE with a greedy-rollout baseline on freshly sampled instances."""
    preset = _resolve(preset or config.preset)
    if model is None:
        torch.manual_seed(config.seed)
        model = Mdlram()
    return _reinforce(model, config, preset, coeffs, selection_objective, MetricsLog(log_path), "mdlram")


def finetune_balance(model: Mdlram, proportions, config: TrainConfig = TrainConfig(), preset=None,
                     coeffs: CostCoefficients = CostCoefficients(), log_path=None) -> TrainResult:
    """Continue REINFORCE on the selection cost plus the depot balance penalty."""
    preset = _resolve(preset or config.preset)
    if len(proportions) != preset.m:
        from .errors import DimensionMismatch

        raise DimensionMismatch(f"{len(proportions)} proportions for {preset.m} depots")
    tuned = copy.deepcopy(model).train()
    return _reinforce(tuned, config, preset, coeffs, balanced_objective(proportions),
                      MetricsLog(log_path), "balance")


# -- depot generator -----------------------------------------------------------

def trace_length(coords: torch.Tensor, actions: torch.Tensor, m: int) -> torch.Tensor:
    """Differentiable length of fixed action traces starting at depot 0.

    ``coords`` (B, V, 2) may require grad; depot-to-depot hops count zero.
    """
    B = coords.shape[0]
    prev = torch.cat([torch.zeros(B, 1, dtype=torch.long), actions[:, :-1]], dim=1)
    a = coords.gather(1, prev.unsqueeze(-1).expand(-1, -1, 2))
    b = coords.gather(1, actions.unsqueeze(-1).expand(-1, -1, 2))
    sq = ((a - b) ** 2).sum(-1)
    moves = ~((prev < m) & (actions < m))
    safe = torch.where(moves, sq, torch.ones_like(sq))
    return (torch.sqrt(safe) * moves).sum(1)


def _frozen(mdlram: Mdlram) -> Mdlram:
    mdlram.eval()
    for p in mdlram.parameters():
        p.requires_grad_(False)
    return mdlram


def depot_route_lengths(mdlram: Mdlram, batch: InstanceBatch, depots: np.ndarray, chunk: int = 1024):
    """Greedy route length and action traces of the frozen policy for given depot sets ``(B, m, 2)``."""
    withd = batch.with_depots(depots)
    lengths, actions = [], []
    with torch.no_grad():
        for s in range(0, withd.size, chunk):
            out = rollout_batch(mdlram, _slice(withd, s, s + chunk), "greedy")
            lengths.append(out.cost.route_length)
            actions.append(out.trajectory.actions)
    # chunks end at different lengths; repeating the closing depot adds only free hops
    T = max(a.shape[1] for a in actions)
    actions = [torch.cat([a, a[:, -1:].expand(-1, T - a.shape[1])], dim=1) for a in actions]
    return torch.cat(lengths), torch.cat(actions)


def generation_cost(depots: torch.Tensor, route_length: torch.Tensor, coeffs: CostCoefficients) -> torch.Tensor:
    far, close = batch_depot_penalties(depots, coeffs)
    return route_length + far + close


def evaluate_exact(dgm: Dgm, mdlram: Mdlram, batch: InstanceBatch,
                   coeffs: CostCoefficients = CostCoefficients()) -> float:
    depots = dgm.exact_depots(batch)
    lengths, _ = depot_route_lengths(mdlram, batch, depots)
    return float(generation_cost(torch.as_tensor(depots), lengths, coeffs).mean())


def evaluate_gaussian(dgm: Dgm, mdlram: Mdlram, batch: InstanceBatch, k: int = 16, seed: int = 0,
                      coeffs: CostCoefficients = CostCoefficients()) -> dict:
    """Mean sampled generation cost and mean distance penalty over ``k`` draws per instance."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        mu, L = dgm.gaussian_head(dgm.dgm_encode(customer_features(batch, dgm.dtype)))
        depots, _ = sample_depots(mu.double(), L.double(), k, gen)
    flat = depots.reshape(-1, dgm.m, 2).numpy()
    lengths, _ = depot_route_lengths(mdlram, batch.repeat(k), flat)
    far, close = batch_depot_penalties(torch.as_tensor(flat), coeffs)
    return {"l_gen": float((lengths + far + close).mean()), "penalty": float((far + close).mean()),
            "length": float(lengths.mean())}


def evaluate_random(mdlram: Mdlram, batch: InstanceBatch, k: int = 512, seed: int = 0,
                    coeffs: CostCoefficients = CostCoefficients()) -> float:
    """Mean generation cost of ``k`` uniform-random depot sets per instance."""
    rng = np.random.default_rng(seed)
    m = batch.m
    depots = rng.uniform(0.0, 1.0, size=(batch.size * k, m, 2))
    lengths, _ = depot_route_lengths(mdlram, batch.repeat(k), depots)
    return float(generation_cost(torch.as_tensor(depots), lengths, coeffs).mean())


def train_dgm_exact(config: TrainConfig, mdlram: Mdlram, preset=None, dgm: Dgm | None = None,
                    coeffs: CostCoefficients = CostCoefficients(), log_path=None) -> TrainResult:
    """Pathwise training: route fixed by the frozen policy, length differentiated in the depot coordinates."""
    use_single_thread()
    preset = _resolve(preset or config.preset)
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    if dgm is None:
        dgm = Dgm(preset.m)
    _frozen(mdlram)
    opt = torch.optim.Adam(dgm.parameters(), lr=config.lr)
    log = MetricsLog(log_path)
    result = TrainResult(dgm)
    for epoch in range(config.epochs):
        for b in range(config.batches_per_epoch):
            batch = sample_batch(preset, config.main_batch, rng)
            depots = dgm.exact_head(dgm.dgm_encode(customer_features(batch, dgm.dtype)))
            _, actions = depot_route_lengths(mdlram, batch, depots.detach().double().numpy())
            coords = torch.cat([depots.double(), torch.as_tensor(batch.customer_xy)], dim=1)
            l_gen = generation_cost(depots.double(), trace_length(coords, actions, preset.m), coeffs)
            mean_cost = float(l_gen.detach().mean())
            _check_finite(mean_cost, "mean generation cost")
            norm = _optimizer_step(dgm, opt, l_gen.mean(), config.clip_norm)
            result.curve.append(mean_cost)
            result.grad_norms.append(norm)
            log.write(run="dgm_exact", epoch=epoch, batch=b, mean_cost=mean_cost, grad_norm=norm)
    result.metrics = log.records
    return result


def gaussian_loss(l_gen: torch.Tensor, log_prob: torch.Tensor, sub_batch_baseline: bool) -> torch.Tensor:
    """Score-function surrogate over ``(B_main, B_sub)`` costs and log-densities."""
    adv = l_gen.detach()
    if sub_batch_baseline:
        adv = adv - adv.mean(dim=1, keepdim=True)
    return (adv.to(log_prob.dtype) * log_prob).mean(dim=1).mean()


def train_dgm_gaussian(config: TrainConfig, mdlram: Mdlram, preset=None, dgm: Dgm | None = None,
                       coeffs: CostCoefficients = CostCoefficients(), log_path=None) -> TrainResult:
    """Score-function training of the Gaussian head with sub-batches of sampled depot sets."""
    use_single_thread()
    preset = _resolve(preset or config.preset)
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    gen = torch.Generator().manual_seed(config.seed)
    if dgm is None:
        dgm = Dgm(preset.m)
    _frozen(mdlram)
    opt = torch.optim.Adam(dgm.parameters(), lr=config.lr)
    log = MetricsLog(log_path)
    result = TrainResult(dgm)
    k, m = config.sub_batch, preset.m
    for epoch in range(config.epochs):
        for b in range(config.batches_per_epoch):
            batch = sample_batch(preset, config.main_batch, rng)
            mu, L = dgm.gaussian_head(dgm.dgm_encode(customer_features(batch, dgm.dtype)))
            with torch.no_grad():
                depots, X = sample_depots(mu, L, k, gen)
            flat = depots.reshape(-1, m, 2).double()
            lengths, _ = depot_route_lengths(mdlram, batch.repeat(k), flat.numpy())
            l_gen = generation_cost(flat, lengths, coeffs).view(config.main_batch, k)
            logp = gaussian_log_prob(mu, L, X)
            mean_cost = float(l_gen.detach().mean())
            _check_finite(mean_cost, "mean generation cost")
            loss = gaussian_loss(l_gen, logp, config.sub_batch_baseline)
            norm = _optimizer_step(dgm, opt, loss, config.clip_norm)
            result.curve.append(mean_cost)
            result.grad_norms.append(norm)
            log.write(run="dgm_gaussian", epoch=epoch, batch=b, mean_cost=mean_cost, grad_norm=norm)
    result.metrics = log.records
    return result
