"""Command-line front end.

Subcommands: gen-corridor, validate, optimize, optimize-se3, gradcheck,
bench, export.  File formats are JSON (configs, corridors, results,
trajectories) and CSV (samples, benchmarks).  Exit codes: 0 ok, 1 check
failure, 2 input error; failures print a machine-readable error object
{"error": kind, "detail": text}.
"""

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import _backend, flatness, geometry, minco, penalty, solver
from .elimination import BallMap, PolytopeMap, TimeMap
from .errors import MincoplanError

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_INPUT = 2

GRADCHECK_TOL = 1e-4


def _emit(payload):
    json.dump(payload, sys.stdout, indent=2, default=float)
    sys.stdout.write("\n")


def _error(kind, detail):
    _emit({"error": kind, "detail": str(detail)})


# -- config ----------------------------------------------------------------

_SPEC_KEYS = {
    "corridor", "start", "goal", "s", "pieces_per_primitive", "v_max",
    "a_max", "f_min", "f_max", "omega_max", "shape_radii", "k_rho",
    "total_time", "chi", "chi_schedule", "resolution", "seed", "jitter",
    "lbfgs",
}
_LBFGS_KEYS = {
    "memory", "c1", "c2", "grad_tol", "max_iters", "cost_rel_tol",
    "plateau_window", "max_line_iters",
}


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _boundary(value, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim not in (1, 2):
        raise MincoplanError(f"{name} must be a point or a derivative stack")
    return arr


def _spec_from_config(cfg, args, base_dir):
    if not isinstance(cfg, dict):
        raise MincoplanError("config must be a JSON object")
    unknown = set(cfg) - _SPEC_KEYS
    if unknown:
        raise MincoplanError(f"unknown config keys: {sorted(unknown)}")
    for key in ("corridor", "start", "goal"):
        if key not in cfg:
            raise MincoplanError(f"config is missing {key!r}")

    raw = cfg["corridor"]
    if isinstance(raw, str):
        path = raw if os.path.isabs(raw) else os.path.join(base_dir, raw)
        corridor = geometry.load_corridor(path)
    else:
        corridor = geometry.corridor_from_dict(raw)

    kwargs = {
        "corridor": corridor,
        "start": _boundary(cfg["start"], "start"),
        "goal": _boundary(cfg["goal"], "goal"),
    }
    for key in ("s", "pieces_per_primitive", "v_max", "k_rho", "chi",
                "resolution", "seed"):
        if cfg.get(key) is not None:
            kwargs[key] = cfg[key]
    # Nullable limits: an explicit null disables the bound, absence keeps
    # the default.
    for key in ("a_max", "f_min", "f_max", "omega_max", "total_time", "jitter"):
        if key in cfg:
            kwargs[key] = cfg[key]
    if cfg.get("shape_radii") is not None:
        kwargs["shape_radii"] = np.asarray(cfg["shape_radii"], dtype=float)
    if cfg.get("chi_schedule") is not None:
        kwargs["chi_schedule"] = tuple(cfg["chi_schedule"])
    if cfg.get("lbfgs") is not None:
        bad = set(cfg["lbfgs"]) - _LBFGS_KEYS
        if bad:
            raise MincoplanError(f"unknown lbfgs keys: {sorted(bad)}")
        kwargs["lbfgs"] = solver.LBFGSParams(**cfg["lbfgs"])

    # Flag overrides win over the config file.
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if args.pieces is not None:
        kwargs["pieces_per_primitive"] = args.pieces
    if args.fixed_time is not None:
        kwargs["total_time"] = args.fixed_time
    if args.kr is not None:
        kwargs["k_rho"] = args.kr
    return solver.ProblemSpec(**kwargs)


# -- sampling / CSV ---------------------------------------------------------

def _axis_names(prefix, m):
    if m <= 3:
        return [prefix + ax for ax in "xyz"[:m]]
    return [f"{prefix}{i}" for i in range(m)]


def _sample_table(traj, dt=None, se3=False, gravity=flatness.GRAVITY):
    """Uniform-dt samples: t, p, v, a, j (+ f_spec, omega, R row-major)."""
    total = traj.total_duration
    if dt is None:
        dt = total / 1000.0
    if dt <= 0:
        raise MincoplanError("dt must be positive")
    n = max(1, int(round(total / dt)))
    ts = np.linspace(0.0, total, n + 1)
    derivs = traj.sample(ts, 3)
    cols = ["t"]
    for prefix in ("p", "v", "a", "j"):
        cols += _axis_names(prefix, traj.m)
    table = [ts[:, None], derivs.reshape(len(ts), -1)]
    if se3:
        if traj.m != 3:
            raise MincoplanError("state columns require a 3-D trajectory")
        R, f, w, _ = flatness.flat_to_state_batch(
            derivs[:, 2, :], derivs[:, 3, :], gravity
        )
        cols += ["f_spec", "wx", "wy", "wz"]
        cols += [f"R{i}{j}" for i in range(3) for j in range(3)]
        table += [f[:, None], w, R.reshape(len(ts), 9)]
    return cols, np.hstack(table)


def _write_csv(path, cols, data):
    np.savetxt(path, data, delimiter=",", header=",".join(cols),
               comments="", fmt="%.17g")


# -- subcommands -------------------------------------------------------------

def cmd_gen_corridor(args):
    corridor, start, goal = geometry.random_corridor(
        args.seed or 0, args.count, kind=args.kind,
        step=args.step, margin=args.margin,
    )
    report = geometry.validate_corridor(corridor, start, goal)
    if not report:
        _error("generation", f"generated corridor fails validation: {report.failures}")
        return EXIT_CHECK
    payload = geometry.corridor_to_dict(corridor)
    payload["start"] = start.tolist()
    payload["goal"] = goal.tolist()
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2)
    _emit({"written": args.out, "elements": len(corridor), "kind": corridor.kind})
    return EXIT_OK


def cmd_validate(args):
    payload = _load_json(args.path)
    corridor = geometry.corridor_from_dict(payload)
    start = payload.get("start")
    goal = payload.get("goal")
    report = geometry.validate_corridor(
        corridor,
        None if start is None else np.asarray(start, dtype=float),
        None if goal is None else np.asarray(goal, dtype=float),
    )
    _emit({
        "valid": bool(report),
        "failures": [list(f) for f in report.failures],
        "warnings": [list(w) for w in report.warnings],
    })
    return EXIT_OK if report else EXIT_CHECK


def _run_optimize(args, pipeline, se3):
    cfg = _load_json(args.config)
    spec = _spec_from_config(cfg, args, os.path.dirname(os.path.abspath(args.config)))
    result = pipeline(spec)
    out = args.out or os.path.splitext(args.config)[0]
    traj = result.trajectory
    cols, data = _sample_table(traj, dt=args.dt, se3=se3, gravity=spec.gravity)
    _write_csv(out + ".csv", cols, data)
    minco.save_trajectory(traj, out + ".traj.json")
    summary = {
        "status": result.status,
        "converged": result.converged,
        "cost": result.cost,
        "effort": result.effort,
        "penalty": result.penalty,
        "time_cost": result.time_cost,
        "iterations": result.iterations,
        "n_evals": result.n_evals,
        "grad_norm": result.grad_norm,
        "wall_time": result.wall_time,
        "violations": result.violations,
        "total_duration": traj.total_duration,
        "durations": traj.durations.tolist(),
        "samples": out + ".csv",
        "trajectory": out + ".traj.json",
    }
    with open(out + ".json", "w") as fh:
        json.dump(summary, fh, indent=2, default=float)
    _emit(summary)
    return EXIT_OK if result.converged else EXIT_CHECK


def cmd_optimize(args):
    return _run_optimize(args, solver.optimize_corridor, se3=False)


def cmd_optimize_se3(args):
    return _run_optimize(args, solver.optimize_se3, se3=True)


def cmd_export(args):
    traj = minco.load_trajectory(args.path)
    cols, data = _sample_table(traj, dt=args.dt, se3=args.se3)
    if args.out:
        _write_csv(args.out, cols, data)
        _emit({"written": args.out, "rows": int(data.shape[0])})
    else:
        sys.stdout.write(",".join(cols) + "\n")
        np.savetxt(sys.stdout, data, delimiter=",", fmt="%.17g")
    return EXIT_OK


def cmd_bench(args):
    sizes = [int(v) for v in args.sizes.split(",") if v]
    if not sizes or any(v < 2 for v in sizes):
        raise MincoplanError("sizes must be integers >= 2")
    backends = (args.backends.split(",") if args.backends
                else [_backend.current_name()])
    rows = []
    rng = np.random.default_rng(args.seed or 0)
    for name in backends:
        with _backend.use(name):
            for s in (3, 4):
                for M in sizes:
                    q = rng.normal(size=(M - 1, 3))
                    T = rng.uniform(0.5, 1.5, size=M)
                    bc0 = np.zeros((s, 3))
                    bcf = np.zeros((s, 3))
                    t0 = time.perf_counter()
                    traj = minco.construct(q, T, bc0, bcf, s)
                    t1 = time.perf_counter()
                    _, dc, dT = minco.control_effort(traj)
                    minco.propagate_gradient(traj, dc, dT)
                    t2 = time.perf_counter()
                    rows.append((M, s, name, t1 - t0, t2 - t1, t2 - t0))
    cols = ["M", "s", "backend", "construct_s", "propagate_s", "total_s"]
    lines = [",".join(cols)]
    lines += [f"{M},{s},{b},{c:.6f},{p:.6f},{t:.6f}" for M, s, b, c, p, t in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- gradcheck ---------------------------------------------------------------

def _rel_err(analytic, numeric):
    scale = max(abs(analytic), abs(numeric), 1e-10)
    return abs(analytic - numeric) / scale


def _random_trajectory(rng, s, M, m=3):
    q = rng.normal(size=(M - 1, m)) * 2.0
    T = rng.uniform(0.4, 1.8, size=M)
    bc0 = rng.normal(size=(s, m)) * 0.5
    bcf = rng.normal(size=(s, m)) * 0.5
    return q, T, bc0, bcf


def _check_minco(rng, n, wrt, sign=1.0):
    """FD of K = <G, c> + <h, T> against the propagated dW/dq or dW/dT."""
    worst = 0.0
    for _ in range(n):
        s = int(rng.integers(2, 5))
        M = int(rng.integers(2, 6))
        q, T, bc0, bcf = _random_trajectory(rng, s, M)
        G = rng.normal(size=(2 * M * s, 3))
        hT = rng.normal(size=M)

        def K(qq, TT):
            traj = minco.construct(qq, TT, bc0, bcf, s)
            return float(np.sum(G * traj.coeffs.reshape(2 * M * s, 3))
                         + hT @ traj.durations)

        traj = minco.construct(q, T, bc0, bcf, s)
        dq, dT = minco.propagate_gradient(traj, G, hT)
        if wrt == "q":
            d = rng.normal(size=q.shape)
            h = 1e-6
            num = (K(q + h * d, T) - K(q - h * d, T)) / (2 * h)
            ana = sign * float(np.sum(dq * d))
        else:
            d = rng.normal(size=T.shape)
            h = 1e-6
            num = (K(q, T + h * d) - K(q, T - h * d)) / (2 * h)
            ana = sign * float(dT @ d)
        worst = max(worst, _rel_err(ana, num))
    return worst


def _check_time_map(rng, n, kind, sign=1.0):
    worst = 0.0
    for _ in range(n):
        M = int(rng.integers(2, 8))
        tmap = (TimeMap(M) if kind == "free_positive"
                else TimeMap(M, kind="fixed_total", total=float(rng.uniform(2, 9))))
        tau = rng.normal(size=tmap.dim)
        g = rng.normal(size=M)
        d = rng.normal(size=tmap.dim)
        h = 1e-6
        num = (g @ tmap.forward(tau + h * d) - g @ tmap.forward(tau - h * d)) / (2 * h)
        ana = sign * float(tmap.pullback(tau, g) @ d)
        worst = max(worst, _rel_err(ana, num))
    return worst


def _check_ball_map(rng, n, sign=1.0):
    worst = 0.0
    for _ in range(n):
        center = rng.normal(size=3)
        bmap = BallMap(center, float(rng.uniform(0.5, 3.0)))
        xi = rng.normal(size=3)
        g = rng.normal(size=3)
        d = rng.normal(size=3)
        h = 1e-6
        num = (g @ bmap.forward(xi + h * d) - g @ bmap.forward(xi - h * d)) / (2 * h)
        ana = sign * float(bmap.pullback(xi, g) @ d)
        worst = max(worst, _rel_err(ana, num))
    return worst


def _check_polytope_map(rng, n, sign=1.0):
    worst = 0.0
    for _ in range(n):
        k = int(rng.integers(4, 9))
        verts = rng.normal(size=(k, 3)) * 2.0
        pmap = PolytopeMap(verts)
        xi = rng.normal(size=pmap.dim)
        g = rng.normal(size=3)
        d = rng.normal(size=pmap.dim)
        h = 1e-6
        num = (g @ pmap.forward(xi + h * d) - g @ pmap.forward(xi - h * d)) / (2 * h)
        ana = sign * float(pmap.pullback(xi, g) @ d)
        worst = max(worst, _rel_err(ana, num))
    return worst


def _penalty_instance(rng):
    s = int(rng.integers(2, 5))
    M = int(rng.integers(2, 5))
    q, T, bc0, bcf = _random_trajectory(rng, s, M)
    traj = minco.construct(q, T, bc0, bcf, s)
    entries = [
        penalty.ConstraintEntry("speed", penalty.SpeedLimit(1.0), 10.0),
        penalty.ConstraintEntry(
            "ball", penalty.BallContain(np.zeros(3), 1.5), 5.0
        ),
    ]
    cs = penalty.ConstraintSet(entries, resolution=8)
    return cs, traj, s, M


def _check_penalty(rng, n, wrt, sign=1.0):
    worst = 0.0
    h = 1e-5
    for _ in range(n):
        cs, traj, s, M = _penalty_instance(rng)
        I, dc, dT = penalty.integrate_penalty(cs, traj)
        if wrt == "c":
            d = rng.normal(size=traj.coeffs.shape)
            cp = minco.Trajectory(s, traj.durations, traj.coeffs + h * d)
            cm = minco.Trajectory(s, traj.durations, traj.coeffs - h * d)
            num = (penalty.integrate_penalty(cs, cp)[0]
                   - penalty.integrate_penalty(cs, cm)[0]) / (2 * h)
            ana = sign * float(np.sum(dc.reshape(traj.coeffs.shape) * d))
        else:
            d = rng.normal(size=M)
            cp = minco.Trajectory(s, traj.durations + h * d, traj.coeffs)
            cm = minco.Trajectory(s, traj.durations - h * d, traj.coeffs)
            num = (penalty.integrate_penalty(cs, cp)[0]
                   - penalty.integrate_penalty(cs, cm)[0]) / (2 * h)
            ana = sign * float(dT @ d)
        if abs(num) < 1e-8 and abs(ana) < 1e-8:
            continue  # penalty inactive on this draw
        worst = max(worst, _rel_err(ana, num))
    return worst


def _check_flatness(rng, n, sign=1.0):
    worst = 0.0
    for _ in range(n):
        acc = rng.normal(size=(8, 3)) * 3.0
        jer = rng.normal(size=(8, 3)) * 5.0
        _, _, _, cache = flatness.flat_to_state_batch(acc, jer)
        gR = rng.normal(size=(8, 3, 3))
        gf = rng.normal(size=8)
        gw = rng.normal(size=(8, 3))
        ga, gj = flatness.flat_to_state_pullback_batch(cache, gR, gf, gw)
        da = rng.normal(size=acc.shape)
        dj = rng.normal(size=jer.shape)
        h = 1e-6
        Rp, fp, wp, _ = flatness.flat_to_state_batch(acc + h * da, jer + h * dj)
        Rm, fm, wm, _ = flatness.flat_to_state_batch(acc - h * da, jer - h * dj)
        num = (np.sum(gR * (Rp - Rm)) + gf @ (fp - fm) + np.sum(gw * (wp - wm))) / (2 * h)
        ana = sign * float(np.sum(ga * da) + np.sum(gj * dj))
        worst = max(worst, _rel_err(ana, num))
    return worst


def _check_objective(rng, n, sign=1.0):
    worst = 0.0
    problem = None
    for i in range(n):
        if i % 20 == 0:
            corridor, start, goal = geometry.random_corridor(
                int(rng.integers(0, 2**31)), 4,
                kind=("ball" if i % 40 else "polytope"),
            )
            spec = solver.ProblemSpec(
                corridor=corridor, start=start, goal=goal, s=3,
                v_max=3.0, a_max=6.0, seed=int(rng.integers(0, 2**31)),
            )
            problem = solver.Problem(spec)
            x0 = problem.initial_point()
        x = x0 + rng.normal(size=x0.shape) * 0.3
        f, g = problem.cost_and_grad(x)
        d = rng.normal(size=x.shape)
        h = 1e-6
        num = (problem.cost_and_grad(x + h * d)[0]
               - problem.cost_and_grad(x - h * d)[0]) / (2 * h)
        ana = sign * float(g @ d)
        worst = max(worst, _rel_err(ana, num))
    return worst


_GRADCHECK_LAYERS = [
    ("minco.dq", lambda rng, n, sign: _check_minco(rng, n, "q", sign)),
    ("minco.dT", lambda rng, n, sign: _check_minco(rng, n, "T", sign)),
    ("time.free", lambda rng, n, sign: _check_time_map(rng, n, "free_positive", sign)),
    ("time.fixed", lambda rng, n, sign: _check_time_map(rng, n, "fixed_total", sign)),
    ("ball", _check_ball_map),
    ("polytope", _check_polytope_map),
    ("penalty.dc", lambda rng, n, sign: _check_penalty(rng, n, "c", sign)),
    ("penalty.dT", lambda rng, n, sign: _check_penalty(rng, n, "T", sign)),
    ("flatness", _check_flatness),
    ("objective", _check_objective),
]


def run_gradcheck(seed=0, instances=100, inject_fault=None):
    """Directional central-difference checks per layer: [(name, worst rel)].

    ``inject_fault`` negates the named layer's analytic gradient before the
    comparison, the same footprint as a sign bug in that code path, so the
    finite differences genuinely detect it.
    """
    results = []
    for idx, (name, check) in enumerate(_GRADCHECK_LAYERS):
        rng = np.random.default_rng([seed, idx])
        worst = check(rng, instances, -1.0 if inject_fault == name else 1.0)
        results.append((name, worst))
    return results


def cmd_gradcheck(args):
    if args.inject_fault is not None and args.inject_fault not in [
        name for name, _ in _GRADCHECK_LAYERS
    ]:
        raise MincoplanError(f"unknown layer {args.inject_fault!r}")
    results = run_gradcheck(args.seed or 0, args.instances, args.inject_fault)
    failed = [name for name, worst in results if worst > GRADCHECK_TOL]
    for name, worst in results:
        status = "ok" if worst <= GRADCHECK_TOL else "FAIL"
        print(f"{name:12s} {status:4s} worst_rel={worst:.3e}")
    if failed:
        print(f"gradcheck FAILED: {', '.join(failed)}")
        return EXIT_CHECK
    print("gradcheck passed")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(
        prog="mincoplan",
        description="Minimum-control splines and corridor/SE(3) planning.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-corridor", help="generate a random corridor JSON")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--count", type=int, required=True, help="number of elements")
    g.add_argument("--kind", choices=("ball", "polytope"), default="polytope")
    g.add_argument("--step", type=float, default=3.0)
    g.add_argument("--margin", type=float, default=0.5)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_corridor)

    v = sub.add_parser("validate", help="validate a corridor JSON")
    v.add_argument("path")
    v.set_defaults(func=cmd_validate)

    for name, fn in (("optimize", cmd_optimize), ("optimize-se3", cmd_optimize_se3)):
        o = sub.add_parser(name, help=f"run {name.replace('-', ' ')} from a config")
        o.add_argument("--config", required=True)
        o.add_argument("--out", default=None,
                       help="output stem (default: config path sans extension)")
        o.add_argument("--seed", type=int, default=None)
        o.add_argument("--pieces", type=int, default=None,
                       help="pieces per corridor element")
        o.add_argument("--fixed-time", type=float, default=None,
                       help="fix the total duration (disables k_rho)")
        o.add_argument("--kr", type=float, default=None,
                       help="time-regularization weight k_rho")
        o.add_argument("--dt", type=float, default=None,
                       help="CSV sample step (default: total/1000)")
        o.set_defaults(func=fn)

    e = sub.add_parser("export", help="resample a trajectory JSON to CSV")
    e.add_argument("path")
    e.add_argument("--out", default=None)
    e.add_argument("--dt", type=float, default=None)
    e.add_argument("--se3", action="store_true",
                   help="append thrust/body-rate/rotation columns")
    e.set_defaults(func=cmd_export)

    c = sub.add_parser("gradcheck", help="finite-difference audit of every layer")
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--instances", type=int, default=100)
    c.add_argument("--inject-fault", default=None, help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_gradcheck)

    b = sub.add_parser("bench", help="time construct+propagate across M")
    b.add_argument("--sizes", default="1000,10000,100000",
                   help="comma-separated piece counts")
    b.add_argument("--backends", default=None,
                   help="comma-separated kernel backends (default: active)")
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_bench)

    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except json.JSONDecodeError as exc:
        _error("parse", exc)
        return EXIT_INPUT
    except OSError as exc:
        _error("io", exc)
        return EXIT_INPUT
    except MincoplanError as exc:
        _error("input", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
