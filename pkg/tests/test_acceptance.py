"""End-to-end acceptance checks; each test carries the criterion it covers.

The terminal summary prints one PASS/FAIL line per criterion.
"""
from __future__ import annotations

import copy
import math
import re
import time
from dataclasses import replace

import numpy as np
import pytest
import torch

from lrpgen.cost import CostCoefficients, batch_balance_penalty, cost_gen, cost_sel
from lrpgen.depots import DepotDistribution
from lrpgen.env import BatchEnv, BatchState, compute_mask, random_selector, run_batch
from lrpgen.errors import MalformedTrace
from lrpgen.heuristics import solve_alns, solve_ga, solve_ts
from lrpgen.instance import FleetConfig, Instance, InstanceBatch, get_preset, sample_batch, sample_instance
from lrpgen.io import bundled_samples, emit_canonical, parse_canonical, parse_canonical_document, read_bundled
from lrpgen.neural.core import PRIMITIVES, cholesky_quadratic, masked_log_softmax, masked_softmax
from lrpgen.neural.dgm import Dgm, gaussian_log_prob
from lrpgen.neural.mdlram import Mdlram, rollout_batch, solve_greedy, solve_sampling, trace_log_prob
from lrpgen.oracle import brute_force
from lrpgen.solution import trace_to_plan, validate
from lrpgen.training import (TrainConfig, depot_route_lengths, evaluate_exact, evaluate_gaussian,
                             evaluate_random, finetune_balance, generation_cost, greedy_costs,
                             selection_objective, trace_length, train_dgm_exact, train_dgm_gaussian,
                             train_mdlram)
from reference import numeric_gradient, pattern_of, recompute_selection, reference_mask, relative_error

COEFFS = CostCoefficients()
GRID = [(n, m) for n in (5, 10, 20) for m in (1, 2, 3)]


def criterion(number, title):
    return pytest.mark.criterion(number, title)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def _states_along_rollouts(batch: InstanceBatch, gen: torch.Generator):
    env = BatchEnv(batch)
    state = env.reset()
    states = [state]
    while not bool(state.done.all()):
        mask = env.mask(state)
        action, _ = random_selector(gen)(state, mask, 0)
        state, _ = env.step(state, action, mask)
        states.append(state)
    return states


# -- 1 ---------------------------------------------------------------------------

@criterion(1, "mask equivalence with the scalar reference")
def test_mask_equivalence():
    rng = np.random.default_rng(11)
    gen = torch.Generator().manual_seed(11)
    per_pattern = 250
    with Timer() as t:
        pools: dict[str, list] = {p: [] for p in ("depot-open", "depot-done", "customer-open", "customer-done")}
        for n, m in GRID:
            preset = get_preset("toy").resized(n, m)
            batch = sample_batch(preset, 40, rng)
            for state in _states_along_rollouts(batch, gen):
                for b in range(batch.size):
                    row = state.row(b)
                    pools[pattern_of(row.current_vertex, row.visit_record, m)].append((n, m, batch[b], row))
        chosen = []
        for name, pool in pools.items():
            assert len(pool) >= per_pattern, f"too few {name} rows"
            idx = rng.choice(len(pool), per_pattern, replace=False)
            chosen.extend(pool[i] for i in idx)
        assert len(chosen) == 1000
        mismatches = 0
        for n, m in GRID:
            group = [(inst, row) for gn, gm, inst, row in chosen if (gn, gm) == (n, m)]
            if not group:
                continue
            insts = [g[0] for g in group]
            rows = [g[1] for g in group]
            got = compute_mask(BatchState.stack(rows), InstanceBatch.from_instances(insts))
            for i, (inst, row) in enumerate(group):
                ref = reference_mask(row.current_vertex, row.departure_depot, row.remaining_load,
                                     row.visit_record, inst.vertex_demand, m)
                mismatches += int(got[i].tolist() != ref)
    assert mismatches == 0
    assert t.elapsed < 10


# -- 2 ---------------------------------------------------------------------------

def _anchored(trace: list[int], m: int) -> bool:
    dep, in_route = trace[0], False
    for v in trace[1:]:
        if v < m:
            if in_route and v != dep:
                return False
            dep, in_route = v, False
        else:
            in_route = True
    return not in_route


@criterion(2, "random-policy rollouts are always feasible")
def test_feasibility_suite():
    rng = np.random.default_rng(22)
    gen = torch.Generator().manual_seed(22)
    sizes = [10_000 // len(GRID) + (1 if i < 10_000 % len(GRID) else 0) for i in range(len(GRID))]
    violations, total = [], 0
    with Timer() as t:
        for (n, m), count in zip(GRID, sizes):
            batch = sample_batch(get_preset("toy").resized(n, m), count, rng)
            traj = run_batch(BatchEnv(batch), random_selector(gen))
            for b in range(count):
                total += 1
                trace = traj.trace(b)
                inst = batch[b]
                if not _anchored(trace, m):
                    violations.append((n, m, b, "anchoring"))
                    continue
                try:
                    report = validate(trace_to_plan(trace, inst), inst)
                except MalformedTrace as exc:
                    violations.append((n, m, b, str(exc)))
                    continue
                if not report.ok:
                    violations.append((n, m, b, report.violations))
    assert total == 10_000
    assert violations == []
    assert t.elapsed < 60


# -- 3 ---------------------------------------------------------------------------

@criterion(3, "cost decomposition and generation-cost examples")
def test_cost_correctness():
    rng = np.random.default_rng(33)
    gen = torch.Generator().manual_seed(33)
    plans = []
    with Timer() as t:
        base = get_preset("toy")
        for n, m in GRID:
            # tight supplies so the excess term is exercised
            preset = replace(base.resized(n, m), supply_range=(5.0, 40.0))
            batch = sample_batch(preset, 112, rng)
            traj = run_batch(BatchEnv(batch), random_selector(gen))
            plans.extend((batch[b], trace_to_plan(traj.trace(b), batch[b])) for b in range(batch.size))
        plans = plans[:1000]
        assert len(plans) == 1000
        coeffs = CostCoefficients(alpha=1.3, beta=0.7, delta=2.0)
        worst = 0.0
        penalised = 0
        for inst, plan in plans:
            got = cost_sel(plan, inst, coeffs)
            ref = recompute_selection(plan, inst, coeffs)
            for key, val in ref.items():
                worst = max(worst, abs(getattr(got, key) - val))
            parts = (got.route_length + coeffs.alpha * got.depot_cost + coeffs.beta * got.vehicle_cost
                     + coeffs.delta * got.supply_penalty)
            worst = max(worst, abs(parts - got.total))
            penalised += got.supply_penalty > 0
        assert worst <= 1e-12
        assert penalised > 0

        c = CostCoefficients(lam=10.0, epsilon=10.0, l_min=0.2, l_max=0.7)
        L = 3.25
        assert cost_gen([(0.05, 0.5), (0.95, 0.5)], L, c) == pytest.approx(L + 2.0, abs=1e-12)
        assert cost_gen([(0.3, 0.5), (0.75, 0.5)], L, c) == pytest.approx(L, abs=1e-12)
        corner = cost_gen([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], 0.0, c)
        assert corner == pytest.approx(10 * (0.3 + 0.3 + (math.sqrt(2) - 0.7)), abs=1e-12)
        assert round(corner, 3) == 13.142
    assert t.elapsed < 10


# -- 4 ---------------------------------------------------------------------------

@criterion(4, "heuristics against the exact optimum")
def test_oracle_dominance():
    preset = get_preset("tiny")
    torch.manual_seed(44)
    policy = Mdlram(dim=32, heads=4, layers=1, ff=64)
    gaps = {"alns": [], "ga": [], "ts": [], "mdlram-greedy": [], "mdlram-sample": []}
    with Timer() as t:
        for seed in range(50):
            inst = sample_instance(preset, seed)
            assert inst.n <= 7 and inst.m == 2
            opt = brute_force(inst, COEFFS).best_cost.total
            plans = {
                "alns": solve_alns(inst, COEFFS, seed=seed),
                "ga": solve_ga(inst, COEFFS, seed=seed),
                "ts": solve_ts(inst, COEFFS, seed=seed),
                "mdlram-greedy": solve_greedy(inst, policy, COEFFS),
                "mdlram-sample": solve_sampling(inst, policy, 32, seed, COEFFS),
            }
            for name, plan in plans.items():
                cost = cost_sel(plan, inst, COEFFS).total
                assert cost >= opt - 1e-9, f"{name} beat the optimum on seed {seed}"
                gaps[name].append(cost / opt - 1.0)
    within = lambda name, tol: sum(g <= tol + 1e-12 for g in gaps[name])
    print(f"\nALNS within 5%: {within('alns', 0.05)}/50, GA within 10%: {within('ga', 0.10)}/50, "
          f"TS within 10%: {within('ts', 0.10)}/50")
    assert within("alns", 0.05) >= 45
    assert within("ga", 0.10) >= 40
    assert within("ts", 0.10) >= 40
    assert t.elapsed < 600


# -- 5 ---------------------------------------------------------------------------

def _primitive_cases(rng):
    r = lambda *s: rng.normal(size=s)
    mask = np.zeros((2, 5), dtype=bool)
    mask[0, 1] = mask[1, 3] = True
    tri = np.tril(rng.normal(size=(3, 3)), -1) + np.diag(rng.uniform(0.8, 1.5, 3))
    return {
        "matmul": (PRIMITIVES["matmul"], [r(3, 4), r(4, 2)]),
        "add": (PRIMITIVES["add"], [r(3, 4), r(3, 4)]),
        "concat": (PRIMITIVES["concat"], [r(2, 3), r(2, 2)]),
        "softmax": (PRIMITIVES["softmax"], [r(2, 5)]),
        "tanh": (PRIMITIVES["tanh"], [r(3, 4)]),
        "elu": (PRIMITIVES["elu"], [r(3, 4)]),
        "sigmoid": (PRIMITIVES["sigmoid"], [r(3, 4)]),
        "mean": (PRIMITIVES["mean"], [r(3, 4)]),
        "log": (PRIMITIVES["log"], [rng.uniform(0.3, 2.0, (3, 4))]),
        "exp": (PRIMITIVES["exp"], [r(3, 4)]),
        "masked_softmax": (lambda a: masked_softmax(a, torch.as_tensor(mask)), [r(2, 5)]),
        "masked_log_softmax": (lambda a: masked_log_softmax(a, torch.as_tensor(mask)).masked_fill(
            torch.as_tensor(mask), 0.0), [r(2, 5)]),
        "cholesky_quadratic": (lambda L, v: cholesky_quadratic(torch.tril(L), v), [tri, r(3)]),
    }


def _scalar_of(fn, weights, inputs, which, x):
    args = [torch.as_tensor(a) for a in inputs]
    args[which] = torch.as_tensor(x)
    return float((fn(*args) * weights).sum())


@criterion(5, "gradients match central finite differences")
def test_gradient_fidelity():
    rng = np.random.default_rng(55)
    torch.manual_seed(55)
    with Timer() as t:
        # primitives at 20 random points each, relative error < 1e-3
        worst_prim = 0.0
        for point in range(20):
            for name, (fn, inputs) in _primitive_cases(rng).items():
                tens = [torch.tensor(a, dtype=torch.float64, requires_grad=True) for a in inputs]
                out = fn(*tens)
                w = torch.as_tensor(rng.normal(size=tuple(out.shape)))
                (out * w).sum().backward()
                for i, tx in enumerate(tens):
                    fd = numeric_gradient(lambda x: _scalar_of(fn, w, inputs, i, x), inputs[i], 1e-6)
                    g = tx.grad.numpy()
                    if name == "cholesky_quadratic" and i == 0:
                        g, fd = np.tril(g), np.tril(fd)
                    worst_prim = max(worst_prim, relative_error(g, fd))
        assert worst_prim < 1e-3, worst_prim

        # full routing-policy log-probability w.r.t. all parameters, < 1e-3
        preset = get_preset("toy").resized(6, 2)
        worst_lp = 0.0
        for point in range(20):
            torch.manual_seed(1000 + point)
            model = Mdlram(dim=16, heads=2, layers=1, ff=32).double()
            batch = sample_batch(preset, 2, rng)
            with torch.no_grad():
                acts = rollout_batch(model, batch, "sample", torch.Generator().manual_seed(point)).trajectory.actions
            params = list(model.parameters())
            model.zero_grad()
            trace_log_prob(model, batch, acts).sum().backward()
            g = torch.cat([p.grad.reshape(-1) for p in params])
            theta = torch.nn.utils.parameters_to_vector(params).detach()

            def f(vec):
                torch.nn.utils.vector_to_parameters(vec, params)
                with torch.no_grad():
                    return float(trace_log_prob(model, batch, acts).sum())

            gn = float(g.norm())
            dirs = [g / g.norm()] + [torch.nn.functional.normalize(torch.randn_like(theta), dim=0) for _ in range(2)]
            for v in dirs:
                h = 1e-6
                fd = (f(theta + h * v) - f(theta - h * v)) / (2 * h)
                worst_lp = max(worst_lp, abs(fd - float(g @ v)) / max(gn, 1e-8))
            torch.nn.utils.vector_to_parameters(theta, params)
        assert worst_lp < 1e-3, worst_lp

        # Gaussian log-density w.r.t. mean and Cholesky factor, < 1e-3
        worst_g = 0.0
        for point in range(20):
            d = 4
            mu = rng.normal(size=d)
            L = np.tril(rng.normal(scale=0.4, size=(d, d)), -1) + np.diag(rng.uniform(0.6, 1.6, d))
            X = rng.normal(size=(3, d))
            tm = torch.tensor(mu, requires_grad=True)
            tL = torch.tensor(L, requires_grad=True)
            gaussian_log_prob(tm, tL, torch.as_tensor(X)).sum().backward()
            lp = lambda mu_, L_: float(gaussian_log_prob(torch.as_tensor(mu_), torch.as_tensor(np.tril(L_)),
                                                         torch.as_tensor(X)).sum())
            fd_mu = numeric_gradient(lambda x: lp(x, L), mu, 1e-6)
            fd_L = numeric_gradient(lambda x: lp(mu, x), L, 1e-6)
            worst_g = max(worst_g, relative_error(tm.grad.numpy(), fd_mu),
                          relative_error(np.tril(tL.grad.numpy()), np.tril(fd_L)))
        assert worst_g < 1e-3, worst_g

        # pathwise generation-cost gradient w.r.t. depot coordinates, < 1e-2
        torch.manual_seed(77)
        policy = Mdlram(dim=16, heads=2, layers=1, ff=32).double().eval()
        worst_p = 0.0
        for point in range(20):
            batch = sample_batch(get_preset("toy"), 1, rng)
            depots = rng.uniform(0.1, 0.9, size=(1, 2, 2))
            _, acts = depot_route_lengths(policy, batch, depots)
            cust = torch.as_tensor(batch.customer_xy)

            def l_gen(dep):
                dep = torch.as_tensor(dep)
                coords = torch.cat([dep, cust], dim=1)
                return generation_cost(dep, trace_length(coords, acts, 2), COEFFS).sum()

            td = torch.tensor(depots, requires_grad=True)
            l_gen(td).backward()
            fd = numeric_gradient(lambda x: float(l_gen(x)), depots, 1e-6)
            worst_p = max(worst_p, relative_error(td.grad.numpy(), fd))
        assert worst_p < 1e-2, worst_p
    assert t.elapsed < 120


# -- 6 ---------------------------------------------------------------------------

@criterion(6, "Gaussian sample statistics")
def test_gaussian_statistics():
    with Timer() as t:
        mu = np.array([0.3, -0.5, 1.2, 0.0])
        dist = DepotDistribution(mu, np.eye(4))
        depots, X = dist.sample(100_000, seed=66)
        assert np.all(np.abs(X.mean(axis=0) - mu) <= 0.02)
        assert np.all(np.abs(np.cov(X, rowvar=False) - np.eye(4)) <= 0.02)
        assert depots.shape == (100_000, 2, 2)

        zero = DepotDistribution(np.zeros(4), np.eye(4))
        depots, _ = zero.sample(100_000, seed=67)
        assert np.all(np.abs(depots.reshape(-1, 4).mean(axis=0) - 0.5) <= 0.01)
    assert t.elapsed < 60


# -- 7 ---------------------------------------------------------------------------

TOY = get_preset("toy")


@pytest.fixture(scope="module")
def trained_policy():
    torch.manual_seed(0)
    untrained = Mdlram()
    config = TrainConfig(epochs=1, batches_per_epoch=300, batch_size=64, eval_interval=50,
                         eval_size=256, lr=1e-4, seed=0)
    t0 = time.perf_counter()
    result = train_mdlram(config, TOY, copy.deepcopy(untrained))
    return untrained, result, time.perf_counter() - t0


@criterion(7, "training smoke runs")
@pytest.mark.slow
def test_train_mdlram_improves(trained_policy):
    untrained, result, elapsed = trained_policy
    held_out = sample_batch(TOY, 256, np.random.default_rng(7001))
    before = float(greedy_costs(untrained, held_out, selection_objective).mean())
    after = float(greedy_costs(result.model, held_out, selection_objective).mean())
    print(f"\ngreedy held-out cost {before:.4f} -> {after:.4f} ({after / before:.3f}); {elapsed:.0f}s")
    assert after <= 0.9 * before
    assert elapsed < 1800


@criterion(7, "training smoke runs")
@pytest.mark.slow
def test_train_dgm_exact_improves(trained_policy):
    policy = copy.deepcopy(trained_policy[1].model)
    torch.manual_seed(1)
    untrained = Dgm(TOY.m)
    held_out = sample_batch(TOY, 64, np.random.default_rng(7002))
    config = TrainConfig(epochs=1, batches_per_epoch=300, main_batch=8, lr=1e-4, seed=1)
    with Timer() as t:
        result = train_dgm_exact(config, policy, TOY, copy.deepcopy(untrained))
    before = evaluate_exact(untrained, policy, held_out)
    after = evaluate_exact(result.model, policy, held_out)
    rand = evaluate_random(policy, held_out, k=512, seed=7)
    print(f"\nexact generator L_Gen: untrained {before:.4f}, trained {after:.4f}, random {rand:.4f}; {t.elapsed:.0f}s")
    assert after < before
    assert after < rand
    assert t.elapsed < 1800


@criterion(7, "training smoke runs")
@pytest.mark.slow
def test_train_dgm_gaussian_improves(trained_policy):
    policy = copy.deepcopy(trained_policy[1].model)
    torch.manual_seed(2)
    untrained = Dgm(TOY.m)
    held_out = sample_batch(TOY, 64, np.random.default_rng(7003))
    config = TrainConfig(epochs=1, batches_per_epoch=300, main_batch=8, sub_batch=16, lr=1e-4, seed=2)
    with Timer() as t:
        result = train_dgm_gaussian(config, policy, TOY, copy.deepcopy(untrained))
    before = evaluate_gaussian(untrained, policy, held_out, k=16, seed=8)["l_gen"]
    after = evaluate_gaussian(result.model, policy, held_out, k=16, seed=8)["l_gen"]
    print(f"\nGaussian generator sampled L_Gen: {before:.4f} -> {after:.4f}; {t.elapsed:.0f}s")
    assert after < before
    assert t.elapsed < 1800


# -- 8 ---------------------------------------------------------------------------

@criterion(8, "sampling never loses to greedy")
def test_sampling_dominance():
    torch.manual_seed(88)
    policy = Mdlram().eval()
    losses = []
    with Timer() as t:
        for seed in range(200):
            inst = sample_instance(TOY, 80_000 + seed)
            greedy = cost_sel(solve_greedy(inst, policy, COEFFS), inst, COEFFS).total
            sampled = cost_sel(solve_sampling(inst, policy, 16, seed, COEFFS), inst, COEFFS).total
            if sampled > greedy:
                losses.append((seed, greedy, sampled))
    assert losses == []
    assert t.elapsed < 120


# -- 9 ---------------------------------------------------------------------------

def _balance_stats(model, batch, rho):
    with torch.no_grad():
        cost = rollout_batch(model, batch, "greedy").cost
    pen = batch_balance_penalty(cost.depot_lengths, cost.depot_vehicles > 0, rho)
    return float(pen.mean()), float(cost.route_length.mean())


@criterion(9, "balance fine-tuning lowers the balance penalty")
@pytest.mark.slow
def test_balance_finetune(trained_policy):
    base = trained_policy[1].model
    rho = (1.0, 1.0)
    held_out = sample_batch(TOY, 256, np.random.default_rng(9001))
    config = TrainConfig(epochs=1, batches_per_epoch=300, batch_size=64, eval_interval=50,
                         eval_size=256, lr=1e-4, seed=9)
    with Timer() as t:
        tuned = finetune_balance(base, rho, config, TOY).model
    pen0, len0 = _balance_stats(base, held_out, rho)
    pen1, len1 = _balance_stats(tuned, held_out, rho)
    print(f"\nbalance penalty {pen0:.4f} -> {pen1:.4f}; length {len0:.4f} -> {len1:.4f}; {t.elapsed:.0f}s")
    assert pen1 < pen0
    assert len1 <= 1.25 * len0
    assert t.elapsed < 1200


# -- 10 --------------------------------------------------------------------------

def _random_instance(rng: np.random.Generator, i: int) -> Instance:
    n = int(rng.integers(1, 30))
    m = int(rng.integers(0, 6))
    supply = rng.uniform(1, 200, m)
    if m and rng.random() < 0.2:
        supply[int(rng.integers(m))] = np.inf
    normalized = bool(rng.random() < 0.8)
    scale = 1.0 if normalized else float(rng.uniform(1, 500))
    return Instance(rng.uniform(0, 1, (n, 2)) * scale, rng.uniform(0, 10, n), rng.uniform(0, 1, (m, 2)) * scale,
                    supply, rng.uniform(0, 20, m), FleetConfig(float(rng.uniform(10, 100)), float(rng.uniform(0, 2))),
                    name=f"case {i}" if i % 3 else "", normalized=normalized)


@criterion(10, "canonical round trip and bundled samples")
def test_io_round_trip():
    rng = np.random.default_rng(1010)
    with Timer() as t:
        for i in range(1000):
            inst = _random_instance(rng, i)
            coeffs = CostCoefficients(alpha=float(rng.uniform(0, 2))) if i % 2 else None
            text = emit_canonical(inst, coeffs)
            doc = parse_canonical_document(text)
            expected = inst if " " not in inst.name else Instance(
                inst.customer_xy, inst.demand, inst.depot_xy, inst.max_supply, inst.opening_cost, inst.fleet,
                name=inst.name.replace(" ", "_"), normalized=inst.normalized)
            assert doc.instance == expected
            assert doc.coeffs == coeffs
            assert emit_canonical(parse_canonical(text), coeffs) == text
        for name in bundled_samples():
            bench = read_bundled(name)
            n, m = map(int, re.search(r"(\d+)-(\d+)", name).groups())
            assert bench.header == (n, m)
            assert (bench.instance.n, bench.instance.m) == (n, m)
            assert (bench.raw.n, bench.raw.m) == (n, m)
    assert t.elapsed < 10
