"""Command-line entry point: ``lrpgen <gen|solve|train|eval|bench|plot> ...``.

Exit status is 0 on success, 1 when a command fails and 2 for bad flags.
``LRPGEN_OUT`` sets the default output directory.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .cost import CostCoefficients, cost_sel
from .errors import LrpError

METHODS = ("mdlram-greedy", "mdlram-sample", "alns", "ga", "ts", "oracle")


def default_out() -> Path:
    return Path(os.environ.get("LRPGEN_OUT", "lrpgen-out"))


# -- helpers -----------------------------------------------------------------

def _coeffs(args) -> CostCoefficients:
    base = CostCoefficients()
    over = {k: getattr(args, k) for k in ("alpha", "beta", "delta", "lam", "epsilon", "l_min", "l_max")
            if getattr(args, k, None) is not None}
    return replace(base, **over)


def load_instance(path, dialect: str | None = None):
    text = Path(path).read_text()
    if dialect:
        return io.parse_benchmark(text, dialect, name=Path(path).stem).instance
    return io.parse_canonical(text)


def _instance_files(path) -> list[Path]:
    p = Path(path)
    if p.is_dir():
        files = sorted(q for q in p.iterdir() if q.suffix in (".lrp", ".dat", ".txt"))
        if not files:
            raise FileNotFoundError(f"no instance files in {p}")
        return files
    return [p]


def load_model(path):
    import torch

    from .neural.core import read_checkpoint
    from .neural.dgm import Dgm
    from .neural.mdlram import Mdlram

    meta, state = read_checkpoint(path)
    cfg = dict(meta["config"])
    kind = cfg.pop("kind")
    cfg.pop("preset", None)
    model = Mdlram(**cfg) if kind == "mdlram" else Dgm(**cfg)
    model.load_state_dict(state)
    model.eval()
    return model


def _policy(args):
    import torch

    from .neural.mdlram import Mdlram

    if getattr(args, "checkpoint", None):
        return load_model(args.checkpoint)
    print("warning: no --checkpoint given, using an untrained policy", file=sys.stderr)
    torch.manual_seed(args.seed)
    return Mdlram().eval()


def run_method(method: str, instance, coeffs: CostCoefficients, seed: int, options: dict):
    """Solve one instance; returns ``(plan, wall_time)``."""
    from .heuristics import AlnsParams, GaParams, TsParams, solve_alns, solve_ga, solve_ts

    t0 = time.perf_counter()
    if method == "oracle":
        from .oracle import brute_force

        plan = brute_force(instance, coeffs).best_plan
    elif method == "alns":
        it = options.get("iterations")
        plan = solve_alns(instance, coeffs, AlnsParams() if it is None else AlnsParams(iterations=it), seed)
    elif method == "ga":
        g = options.get("generations")
        plan = solve_ga(instance, coeffs, GaParams() if g is None else GaParams(generations=g), seed)
    elif method == "ts":
        it = options.get("iterations")
        plan = solve_ts(instance, coeffs, TsParams() if it is None else TsParams(iterations=it), seed)
    elif method in ("mdlram-greedy", "mdlram-sample"):
        from .neural.mdlram import solve_greedy, solve_sampling

        model = options["model"]
        if method == "mdlram-greedy":
            plan = solve_greedy(instance, model, coeffs)
        else:
            plan = solve_sampling(instance, model, options.get("samples", 1280), seed, coeffs)
    else:
        raise ValueError(f"unknown method {method!r}")
    return plan, time.perf_counter() - t0


def _solve_job(job):
    method, path, dialect, coeffs, seed, options = job
    if dialect:
        # the policy works in the unit square; everything is reported in raw units
        bm = io.parse_benchmark(Path(path).read_text(), dialect, name=Path(path).stem)
        inst, solve_on = bm.raw, (bm.instance if method.startswith("mdlram") else bm.raw)
    else:
        inst = solve_on = load_instance(path)
    plan, wall = run_method(method, solve_on, coeffs, seed, options)
    return io.result_record(inst, method, seed, cost_sel(plan, inst, coeffs), plan, wall,
                            {"source": str(path)})


SUMMARY_COLUMNS = ("Ttl.C.", "Len.", "Dpt.C.(Nb.)", "Veh.C.(Nb.)", "Dpt.P.", "Time(s)")


def summarize(records: list[dict]) -> list[dict]:
    """Per-method means in the shape of a results table."""
    out = []
    for method in dict.fromkeys(r["method"] for r in records):
        rs = [r for r in records if r["method"] == method]
        mean = lambda key: float(np.mean([r["cost"][key] for r in rs]))
        out.append({
            "method": method, "instances": len(rs),
            "total": mean("total"), "route_length": mean("route_length"),
            "depot_cost": mean("depot_cost"), "depots_opened": mean("depots_opened"),
            "vehicle_cost": mean("vehicle_cost"), "vehicles": mean("vehicles"),
            "supply_penalty": mean("supply_penalty"),
            "wall_time": float(np.mean([r["wall_time"] for r in rs])),
        })
    return out


def format_summary(rows: list[dict]) -> str:
    lines = ["method".ljust(14) + "".join(c.rjust(16) for c in SUMMARY_COLUMNS)]
    for r in rows:
        cells = [f"{r['total']:.3f}", f"{r['route_length']:.3f}",
                 f"{r['depot_cost']:.2f}({r['depots_opened']:.2f})",
                 f"{r['vehicle_cost']:.2f}({r['vehicles']:.2f})",
                 f"{r['supply_penalty']:.3f}", f"{r['wall_time']:.3f}"]
        lines.append(r["method"].ljust(14) + "".join(c.rjust(16) for c in cells))
    return "\n".join(lines)


def _run_jobs(jobs, workers: int):
    if workers <= 1:
        return [_solve_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_solve_job, jobs))


def _options(args) -> dict:
    return {"iterations": args.iterations, "generations": args.generations, "samples": args.samples}


# -- commands ------------------------------------------------------------------

def cmd_gen(args) -> int:
    from .instance import get_preset, sample_instance

    preset = get_preset(args.preset)
    if args.n or args.m is not None:
        preset = preset.resized(args.n or None, args.m)
    out = Path(args.out or default_out())
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.SeedSequence(args.seed)
    for i, child in enumerate(rng.spawn(args.count)):
        inst = sample_instance(preset, np.random.default_rng(child))
        inst = replace(inst, name=f"{preset.name}-{args.seed}-{i:04d}")
        (out / f"{inst.name}.lrp").write_text(io.emit_canonical(inst))
    print(f"wrote {args.count} instance(s) to {out}")
    return 0


def cmd_solve(args) -> int:
    from .instance import get_preset, sample_instance

    coeffs = _coeffs(args)
    if args.instances:
        inst = load_instance(args.instances, args.dialect)
    else:
        inst = sample_instance(get_preset(args.preset), args.seed)
    options = _options(args)
    if args.method.startswith("mdlram"):
        options["model"] = _policy(args)
    plan, wall = run_method(args.method, inst, coeffs, args.seed, options)
    cost = cost_sel(plan, inst, coeffs)
    rec = io.result_record(inst, args.method, args.seed, cost, plan, wall)
    out = Path(args.out) if args.out else default_out() / f"result-{args.method}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_json(out, rec)
    print(f"{args.method}: total {cost.total:.6f} (length {cost.route_length:.6f}) -> {out}")
    return 0


def cmd_train(args) -> int:
    from .neural.core import save_checkpoint
    from .training import TrainConfig, finetune_balance, train_dgm_exact, train_dgm_gaussian, train_mdlram

    cfg = TrainConfig(epochs=args.epochs, batches_per_epoch=args.batches, batch_size=args.batch_size,
                      main_batch=args.main_batch, sub_batch=args.sub_batch, lr=args.lr, seed=args.seed,
                      eval_interval=args.eval_interval, eval_size=args.eval_size,
                      sub_batch_baseline=args.sub_batch_baseline, preset=args.preset)
    out = Path(args.out or default_out())
    out.mkdir(parents=True, exist_ok=True)
    log = out / f"metrics-{args.model}.jsonl"
    log.unlink(missing_ok=True)
    coeffs = _coeffs(args)
    if args.model == "mdlram":
        res = train_mdlram(cfg, coeffs=coeffs, log_path=log)
    elif args.model == "balance":
        if not args.checkpoint:
            raise LrpError("balance fine-tuning needs --checkpoint with a trained policy")
        rho = [float(x) for x in args.proportions.split(",")]
        res = finetune_balance(load_model(args.checkpoint), rho, cfg, coeffs=coeffs, log_path=log)
    else:
        if not args.checkpoint:
            raise LrpError("depot generator training needs --checkpoint with a trained policy")
        critic = load_model(args.checkpoint)
        fn = train_dgm_exact if args.model == "dgm-exact" else train_dgm_gaussian
        res = fn(cfg, critic, coeffs=coeffs, log_path=log)
    kind = "mdlram" if args.model in ("mdlram", "balance") else "dgm"
    ckpt = out / f"{args.model}.npz"
    save_checkpoint(ckpt, res.model, {"kind": kind, "preset": args.preset, **res.model.config})
    print(f"trained {args.model}: final mean cost {res.curve[-1]:.4f}; checkpoint {ckpt}, metrics {log}")
    return 0


def _eval_like(args, files, dialect) -> int:
    coeffs = _coeffs(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise LrpError(f"unknown method(s) {bad}; choose from {list(METHODS)}")
    options = _options(args)
    workers = args.workers
    if any(m.startswith("mdlram") for m in methods):
        options["model"] = _policy(args)
        workers = 1  # the policy stays in this process
    jobs = [(m, f, dialect, coeffs, args.seed + i, options) for i, f in enumerate(files) for m in methods]
    records = _run_jobs(jobs, workers)
    out = Path(args.out or default_out())
    (out / "results").mkdir(parents=True, exist_ok=True)
    for rec in records:
        stem = Path(rec["source"]).stem
        io.write_json(out / "results" / f"{stem}-{rec['method']}.json", rec)
    rows = summarize(records)
    io.write_json(out / "summary.json", rows)
    print(format_summary(rows))
    return 0


def cmd_eval(args) -> int:
    return _eval_like(args, _instance_files(args.instances), args.dialect)


def cmd_bench(args) -> int:
    if args.instances:
        return _eval_like(args, _instance_files(args.instances), args.dialect or "prodhon")
    from importlib import resources

    root = resources.files("lrpgen.data")
    files, dialects = [], set()
    for name, dialect in io.bundled_samples().items():
        files.append(Path(str(root.joinpath(name))))
        dialects.add(dialect)
    # bundled samples mix dialects, so run one pass per dialect
    status = 0
    for dialect in sorted(dialects):
        chosen = [f for f in files if io.bundled_samples()[f.name] == dialect]
        print(f"[{dialect}]")
        status |= _eval_like(args, chosen, dialect)
    return status


def cmd_plot(args) -> int:
    from . import plot
    from .depots import DepotDistribution
    from .solution import RoutePlan, Route

    out = Path(args.out) if args.out else default_out() / "plot.svg"
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.dist:
        data = io.read_json(args.dist)
        dists = data if isinstance(data, list) else [data]
        inst = load_instance(args.instances, args.dialect) if args.instances else None
        svg = plot.heatmap_svg(DepotDistribution.from_dict(dists[args.index]), args.resolution, instance=inst)
    else:
        if not (args.instances and args.results):
            raise LrpError("route maps need --instances and --results")
        inst = load_instance(args.instances, args.dialect)
        rec = io.read_json(args.results)
        plan = RoutePlan(tuple(Route.build(r["depot"], r["stops"], inst) for r in rec["routes"]))
        svg = plot.route_map_svg(inst, plan, title=f"{rec['method']} total {rec['cost']['total']:.3f}")
    out.write_text(svg)
    print(f"wrote {out}")
    return 0


# -- parser ----------------------------------------------------------------------

def _add_coeffs(p):
    g = p.add_argument_group("objective weights")
    for name in ("alpha", "beta", "delta", "lam", "epsilon"):
        g.add_argument(f"--{name}", type=float)
    g.add_argument("--l-min", dest="l_min", type=float)
    g.add_argument("--l-max", dest="l_max", type=float)


def _add_solver_opts(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=1280, help="sampled rollouts for mdlram-sample")
    p.add_argument("--iterations", type=int, help="ALNS/TS iteration budget")
    p.add_argument("--generations", type=int, help="GA generation budget")
    p.add_argument("--checkpoint", help="trained policy checkpoint for the mdlram methods")
    p.add_argument("--dialect", choices=sorted(io.DIALECTS), help="read benchmark-layout files")
    p.add_argument("--out")
    _add_coeffs(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lrpgen", description="Location-routing toolkit.", allow_abbrev=False)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="sample canonical instance files", allow_abbrev=False)
    p.add_argument("--preset", default="toy")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--n", type=int, default=0, help="override the preset customer count")
    p.add_argument("--m", type=int, help="override the preset depot count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="solve one instance", allow_abbrev=False)
    p.add_argument("--instances", help="instance file; omit to sample from --preset")
    p.add_argument("--preset", default="toy")
    p.add_argument("--method", choices=METHODS, required=True)
    _add_solver_opts(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", help="train a model", allow_abbrev=False)
    p.add_argument("--model", choices=("mdlram", "dgm-exact", "dgm-gaussian", "balance"), default="mdlram")
    p.add_argument("--preset", default="toy")
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--batches", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--main-batch", type=int, default=8)
    p.add_argument("--sub-batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--eval-interval", type=int, default=100)
    p.add_argument("--eval-size", type=int, default=256)
    p.add_argument("--sub-batch-baseline", action="store_true")
    p.add_argument("--proportions", default="1,1", help="depot length proportions for --model balance")
    p.add_argument("--checkpoint")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _add_coeffs(p)
    p.set_defaults(func=cmd_train)

    for name, func, hint in (("eval", cmd_eval, "compare methods over a directory of instances"),
                             ("bench", cmd_bench, "run the method matrix on benchmark-layout files")):
        p = sub.add_parser(name, help=hint, allow_abbrev=False)
        p.add_argument("--instances", required=(name == "eval"), help="file or directory")
        p.add_argument("--methods", default="alns,ga,ts")
        p.add_argument("--workers", type=int, default=1)
        _add_solver_opts(p)
        p.set_defaults(func=func)

    p = sub.add_parser("plot", help="render SVG route maps or depot heatmaps", allow_abbrev=False)
    p.add_argument("--instances", help="instance file")
    p.add_argument("--results", help="results file holding a route list")
    p.add_argument("--dist", help="JSON depot distribution (mean and factor or covariance)")
    p.add_argument("--index", type=int, default=0, help="entry to draw when --dist holds a list")
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--dialect", choices=sorted(io.DIALECTS))
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LrpError, OSError, ValueError, KeyError) as exc:
        print(f"lrpgen {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
