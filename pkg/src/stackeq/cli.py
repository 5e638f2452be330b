"""Benchmark harness: generate instances, run solvers, emit run directories.

Every run gets its own directory under the output root (--out flag,
STACKEQ_OUT environment variable, or ./runs) containing manifest.json,
trace.csv, summary.csv, and timing.csv. Trace and summary files are
bit-reproducible from the manifest; timing.csv holds the measured wall
times and is the one deliberately non-deterministic output.

Exit codes: 0 converged, 2 iteration limit, 1 error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConvergenceError, InstanceFormatError
from .game import leader_polytope, residual_gne, residual_ve
from .implicit import (build_active_system, implicit_gradient,
                       implicit_gradient_vi, leader_total_gradient)
from .lifted import detect_active_set, kkt_residuals, layout_of
from .pigd import PIGDConfig, solve_pigd
from .polytopes import project
from .problems import (build_charging_game, build_dispatch_game,
                       check_existence_conditions, default_charging_instance,
                       default_dispatch_instance, generate_charging_instances,
                       generate_dispatch_instances, parse_instance,
                       serialize_instance)
from .proximal import ProximalConfig, solve_proximal
from .ve import VEConfig

OUT_ENV = "STACKEQ_OUT"


def _r(x) -> str:
    """Shortest exact decimal form of a float, for reproducible files."""
    return repr(float(x))


def output_root(args) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(os.environ.get(OUT_ENV, "runs"))


def make_run_dir(root: Path, base: str) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    cand = root / base
    k = 1
    while cand.exists():
        k += 1
        cand = root / f"{base}-{k}"
    cand.mkdir()
    return cand


def write_manifest(run_dir: Path, payload: dict):
    payload = dict(payload)
    payload["package_version"] = __version__
    (run_dir / "manifest.json").write_text(
        json.dumps(payload, sort_keys=True, indent=1) + "\n")


def write_trace(run_dir: Path, trace, n_leader: int):
    ycols = ",".join(f"y{k}" for k in range(n_leader))
    lines = [f"t,{ycols},leader_value,follower_mean,ve_residual,"
             "step_norm,active_set"]
    tlines = ["t,wall_ms"]
    for rec in trace.records:
        ys = ",".join(_r(v) for v in rec.y)
        lines.append(f"{rec.t},{ys},{_r(rec.leader_value)},"
                     f"{_r(rec.follower_mean)},{_r(rec.ve_residual)},"
                     f"{_r(rec.step_norm)},{rec.active_fingerprint}")
        tlines.append(f"{rec.t},{rec.wall_ms:.3f}")
    (run_dir / "trace.csv").write_text("\n".join(lines) + "\n")
    (run_dir / "timing.csv").write_text("\n".join(tlines) + "\n")


def read_trace(path):
    """Parse a trace.csv back into plain records (round-trip check)."""
    lines = Path(path).read_text().strip().split("\n")
    head = lines[0].split(",")
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        rec = dict(zip(head, parts))
        out.append(rec)
    return out


def write_summary(run_dir: Path, rows):
    head = ("instance,solver,converged,iterations,leader_value,"
            "follower_mean,final_step,y")
    lines = [head]
    for r in rows:
        ys = ";".join(_r(v) for v in r["y"])
        lines.append(
            f"{r['instance']},{r['solver']},{int(r['converged'])},"
            f"{r['iterations']},{_r(r['leader_value'])},"
            f"{_r(r['follower_mean'])},{_r(r['final_step'])},{ys}")
    (run_dir / "summary.csv").write_text("\n".join(lines) + "\n")


def _load_instance(args):
    if getattr(args, "instance", None):
        return parse_instance(args.instance)
    kind = getattr(args, "kind", "charging")
    if kind == "charging":
        return default_charging_instance()
    return default_dispatch_instance()


def build_game(inst):
    from .problems.charging import ChargingInstance
    if isinstance(inst, ChargingInstance):
        return build_charging_game(inst)
    return build_dispatch_game(inst)


def _pigd_config(args) -> PIGDConfig:
    return PIGDConfig(leader_step=args.rho, stop_eps=args.eps,
                      t_max=args.t_max, trace_every=args.trace_every,
                      ve_config=VEConfig())


def _proximal_config(args) -> ProximalConfig:
    return ProximalConfig(stop_eps=args.eps, t_max=args.t_max,
                          trace_every=args.trace_every)


def _run_solver(spec, solver: str, args):
    if solver == "pigd":
        y, point, trace = solve_pigd(spec, cfg=_pigd_config(args))
        x = point.x
    else:
        y, x, trace = solve_proximal(spec, cfg=_proximal_config(args))
    rec = trace.records[-1]
    row = {"instance": spec.name, "solver": solver,
           "converged": trace.converged, "iterations": trace.iterations,
           "leader_value": rec.leader_value,
           "follower_mean": rec.follower_mean,
           "final_step": rec.step_norm, "y": y}
    return y, x, trace, row


def cmd_gen(args) -> int:
    root = output_root(args)
    root.mkdir(parents=True, exist_ok=True)
    if args.kind == "charging":
        instances = generate_charging_instances(args.seed, args.count)
    else:
        instances = generate_dispatch_instances(args.seed, args.n, args.m,
                                                args.count)
    for inst in instances:
        path = root / f"{inst.name}.json"
        serialize_instance(inst, path)
        print(path)
    return 0


def cmd_solve(args) -> int:
    inst = _load_instance(args)
    spec = build_game(inst)
    run_dir = make_run_dir(output_root(args),
                           f"solve-{spec.name}-{args.solver}-s{args.seed}")
    write_manifest(run_dir, {
        "command": "solve", "solver": args.solver,
        "instance": args.instance or f"default-{args.kind}",
        "seed": args.seed, "rho": args.rho, "eps": args.eps,
        "t_max": args.t_max, "trace_every": args.trace_every})
    _, _, trace, row = _run_solver(spec, args.solver, args)
    write_trace(run_dir, trace, spec.n_leader)
    write_summary(run_dir, [row])
    print(f"{run_dir}: {args.solver} on {spec.name} "
          f"{'converged' if trace.converged else 'hit the iteration limit'} "
          f"after {trace.iterations} iterations, "
          f"leader value {row['leader_value']:.6g}")
    return 0 if trace.converged else 2


def _table1_one(payload):
    """Worker for one table1 instance: returns the comparison row."""
    from .problems.dispatch import DispatchInstance
    inst = DispatchInstance(**payload["inst"])
    spec = build_dispatch_game(inst)
    ns = argparse.Namespace(rho=payload["rho"], eps=payload["eps"],
                            t_max=payload["t_max"], trace_every=10_000)
    _, _, tr_p, row_p = _run_solver(spec, "pigd", ns)
    # the baseline converges on its own scale; cap it independently of the
    # gradient solver's iteration budget
    ns.t_max = max(payload["t_max"], 500)
    _, _, tr_x, row_x = _run_solver(spec, "proximal", ns)
    return {"instance": inst.name,
            "pigd_value": row_p["leader_value"],
            "prox_value": row_x["leader_value"],
            "pigd_iters": tr_p.iterations, "prox_iters": tr_x.iterations,
            "pigd_converged": tr_p.converged, "prox_converged": tr_x.converged}


def _inst_payload(inst) -> dict:
    return {"ev_pos": inst.ev_pos, "station_pos": inst.station_pos,
            "e": inst.e, "alpha_d": inst.alpha_d, "alpha_p": inst.alpha_p,
            "alpha_v": inst.alpha_v, "targets": inst.targets,
            "load_cap": inst.load_cap, "count_cap": inst.count_cap,
            "p_min": inst.p_min, "p_max": inst.p_max, "name": inst.name}


def cmd_table1(args) -> int:
    combos = []
    for tok in args.combos.split(","):
        m, n = tok.lower().split("x")
        combos.append((int(m), int(n)))
    run_dir = make_run_dir(output_root(args), f"table1-s{args.seed}")
    write_manifest(run_dir, {
        "command": "table1", "combos": args.combos, "count": args.count,
        "seed": args.seed, "rho": args.rho, "eps": args.eps,
        "t_max": args.t_max, "jobs": args.jobs})
    lines = ["m,n,instance,pigd_value,prox_value,pigd_iters,prox_iters,"
             "pigd_converged,prox_converged"]
    mean_lines = ["m,n,count,failures,pigd_mean,prox_mean,pigd_wins"]
    failures = total = 0
    for ci, (m, n) in enumerate(combos):
        instances = generate_dispatch_instances(args.seed + 1000 * ci, n, m,
                                                args.count)
        payloads = [{"inst": _inst_payload(inst), "rho": args.rho,
                     "eps": args.eps, "t_max": args.t_max}
                    for inst in instances]
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_table1_one, payloads))
        else:
            results = []
            for pl in payloads:
                try:
                    results.append(_table1_one(pl))
                except Exception as exc:  # record, keep going
                    results.append({"instance": pl["inst"]["name"],
                                    "error": str(exc)})
        vals_p, vals_x, wins = [], [], 0
        for r in results:
            total += 1
            if "error" in r:
                failures += 1
                print(f"FAILED {r['instance']}: {r['error']}",
                      file=sys.stderr)
                continue
            lines.append(
                f"{m},{n},{r['instance']},{_r(r['pigd_value'])},"
                f"{_r(r['prox_value'])},{r['pigd_iters']},{r['prox_iters']},"
                f"{int(r['pigd_converged'])},{int(r['prox_converged'])}")
            vals_p.append(r["pigd_value"])
            vals_x.append(r["prox_value"])
            wins += int(r["pigd_value"] < r["prox_value"])
        if vals_p:
            mean_lines.append(
                f"{m},{n},{len(vals_p)},{args.count - len(vals_p)},"
                f"{_r(np.mean(vals_p))},{_r(np.mean(vals_x))},{wins}")
            print(f"M={m} N={n}: leader objective mean "
                  f"{np.mean(vals_p):.4g} (this solver) vs "
                  f"{np.mean(vals_x):.4g} (proximal baseline); "
                  f"lower on {wins}/{len(vals_p)} instances")
    (run_dir / "table1.csv").write_text("\n".join(lines) + "\n")
    (run_dir / "table1_means.csv").write_text("\n".join(mean_lines) + "\n")
    print(run_dir)
    return 1 if total and failures * 5 >= total else 0


def cmd_scaling(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    run_dir = make_run_dir(output_root(args), f"scaling-s{args.seed}")
    write_manifest(run_dir, {
        "command": "scaling", "sizes": args.sizes, "m": args.m,
        "seed": args.seed, "iters": args.iters, "rho": args.rho,
        "eps": args.eps})
    lines = ["n,m,iterations,mean_iter_ms"]
    per_iter = []
    for n in sizes:
        inst = generate_dispatch_instances(args.seed, n, args.m, 1)[0]
        spec = build_dispatch_game(inst)
        cfg = PIGDConfig(leader_step=args.rho, stop_eps=1e-14,
                         t_max=args.iters + 1, trace_every=1)
        _, _, trace = solve_pigd(spec, cfg=cfg)
        walls = [rec.wall_ms for rec in trace.records[1:]] or \
                [trace.records[-1].wall_ms]
        mean_ms = float(np.mean(walls))
        per_iter.append(mean_ms)
        lines.append(f"{n},{args.m},{len(walls)},{mean_ms:.3f}")
        print(f"N={n}: {mean_ms:.1f} ms per outer iteration")
    if len(sizes) > 1:
        slope = float(np.polyfit(np.log(sizes), np.log(per_iter), 1)[0])
        lines.append(f"# log-log slope,{slope:.4f}")
        print(f"log-log slope of per-iteration time vs N: {slope:.3f}")
    else:
        slope = float("nan")
        lines.append("# log-log slope,undefined (single size)")
        print("slope undefined with a single size")
    (run_dir / "scaling.csv").write_text("\n".join(lines) + "\n")
    print(run_dir)
    return 0


def cmd_verify(args) -> int:
    inst = _load_instance(args)
    spec = build_game(inst)
    run_dir = make_run_dir(output_root(args), f"verify-{spec.name}")
    write_manifest(run_dir, {
        "command": "verify", "instance": args.instance or
        f"default-{args.kind}", "seed": args.seed, "rho": args.rho,
        "eps": args.eps, "t_max": args.t_max,
        "debug_perturb": args.debug_perturb})
    y, point, trace = solve_pigd(spec, cfg=_pigd_config(args))
    x = point.x
    if args.debug_perturb:
        x = x.copy()
        x[0] += args.debug_perturb
    report = []
    ve_res = residual_ve(spec, y, x)
    report.append(f"ve_residual,{_r(ve_res)}")
    report.append(f"gne_residual,{_r(residual_gne(spec, y, x))}")
    kk = kkt_residuals(spec, y, point)
    for k in sorted(kk):
        report.append(f"kkt_{k},{_r(kk[k])}")
    active = detect_active_set(spec, y, point)
    if layout_of(spec).n_w <= 800:
        dw = implicit_gradient(build_active_system(spec, y, point, active))
    else:
        dw = implicit_gradient_vi(spec, y, point, active)
    grad = leader_total_gradient(spec, y, point, dw)
    sign = 1.0 if spec.leader_sense == "max" else -1.0
    lp = leader_polytope(spec)
    stat = float(np.linalg.norm(project(lp, y + sign * grad) - y))
    report.append(f"leader_stationarity,{_r(stat)}")
    cond = check_existence_conditions(spec, seed=args.seed)
    report.append(f"monotonicity_estimate,{_r(cond.monotonicity_estimate)}")
    report.append(f"conditions_passed,{int(cond.passed)}")
    for d in cond.details:
        report.append(f"condition_note,{d}")
    report.append(f"converged,{int(trace.converged)}")
    text = "\n".join(report) + "\n"
    (run_dir / "verify.csv").write_text(text)
    print(text, end="")
    print(run_dir)
    return 0 if trace.converged else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stackeq",
        description="Hierarchical-pricing equilibrium solver benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, solver=False):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None,
                       help=f"output root (default ${OUT_ENV} or ./runs)")
        if solver:
            p.add_argument("--instance", default=None,
                           help="instance file; omit for the default instance")
            p.add_argument("--kind", choices=("charging", "dispatch"),
                           default="charging",
                           help="default instance kind when no file is given")
            p.add_argument("--rho", type=float, default=1e-2,
                           help="leader step size")
            p.add_argument("--eps", type=float, default=1e-6,
                           help="stopping threshold on the step norm")
            p.add_argument("--t-max", type=int, default=5000)
            p.add_argument("--trace-every", type=int, default=1)

    p = sub.add_parser("gen", help="generate instance files")
    common(p)
    p.add_argument("--kind", choices=("charging", "dispatch"),
                   default="charging")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--n", type=int, default=25)
    p.add_argument("--m", type=int, default=5)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("solve", help="run one solver on one instance")
    common(p, solver=True)
    p.add_argument("--solver", choices=("pigd", "proximal"), default="pigd")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("table1", help="solver-vs-baseline comparison grid")
    common(p, solver=True)
    p.add_argument("--combos", default="5x25,5x50,10x50,20x50",
                   help="comma list of MxN pairs")
    p.add_argument("--count", type=int, default=30)
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel instances (never parallel within a solve)")
    p.set_defaults(fn=cmd_table1, t_max=60)

    p = sub.add_parser("scaling", help="per-iteration runtime vs N")
    common(p, solver=True)
    p.add_argument("--sizes", default="10,20,40,80")
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--iters", type=int, default=3,
                   help="measured outer iterations per size")
    p.set_defaults(fn=cmd_scaling)

    p = sub.add_parser("verify", help="residual and conditions report")
    common(p, solver=True)
    p.add_argument("--debug-perturb", type=float, default=0.0,
                   help="offset the final profile to demonstrate detection")
    # residual reporting wants a tighter stop than interactive solving
    p.set_defaults(fn=cmd_verify, eps=1e-8)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (InstanceFormatError, ConvergenceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
