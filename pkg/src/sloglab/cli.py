"""Command-line frontend: ``sloglab {simulate,solve,path,bench,cv,compare}``.

Exit codes: 0 success, 1 solver failure, 2 usage or input error, 3 I/O error.
The seed comes from ``--seed``, else ``SLOG_LAB_SEED``, else ``DEFAULT_SEED``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .baselines import CdConfig, lambda_max, lambda_path, run_ista, solve_cd, solve_lai_irls
from .core import ElasticNet, GroupLasso, Lasso, NotConverged, SlogError, kkt_check, objective, relative_distance, standardize
from .simdata import (
    SimulationSpec,
    SparsityTarget,
    Unachievable,
    calibrate_lambda,
    generate,
    generate_raw,
    parse_rule,
    rule_name,
)
from .slog import INVERSIONS, RandomStart, SolverConfig, initial_vector, solve_slog
from .variants import AnnealSchedule, BlockPartition, solve_aslog, solve_enet_slog, solve_group_slog, solve_hybrid

log = logging.getLogger("sloglab")

DEFAULT_SEED = 20240101
SCHEMA = 1
RUNS_HEADER = [
    "s", "rho", "n", "p", "replicate", "seed", "algorithm", "iterations",
    "wall_time_ms", "dist_to_ref", "kkt_violation", "nonzeros", "converged",
]
SOLVE_ALGORITHMS = ("slog", "cd", "ista", "lai", "aslog", "enet", "group", "hybrid")
BENCH_NAMES = {
    "slog": "SLOG", "rslog": "rSLOG", "cd": "CD", "ista": "ISTA", "laiirls": "LaiIRLS", "lai": "LaiIRLS",
    "aslog": "aSLOG", "enetslog": "ENetSLOG", "enet": "ENetSLOG", "groupslog": "GroupSLOG", "group": "GroupSLOG",
    "hybrid": "Hybrid",
}


class UsageError(Exception):
    pass


# -- CSV helpers ----------------------------------------------------------------------


def fmt(x):
    return "%.17g" % x


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_numeric_csv(path):
    """Header and float matrix; blank or non-numeric cells are an input error."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if not body:
        raise UsageError(f"{path}: no data rows")
    out = np.empty((len(body), len(header)))
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise UsageError(f"{path}:{i}: expected {len(header)} fields, got {len(row)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == "" or cell.lower() in ("na", "nan"):
                raise UsageError(f"{path}:{i}: missing value in column {header[j]!r}")
            try:
                out[i - 2, j] = float(cell)
            except ValueError:
                raise UsageError(f"{path}:{i}: non-numeric value {cell!r}") from None
    return header, out


def load_problem(x_path, y_path):
    _, X = read_numeric_csv(x_path)
    _, y = read_numeric_csv(y_path)
    if y.shape[1] != 1:
        raise UsageError(f"{y_path}: expected a single column")
    return standardize(X, y[:, 0])


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def resolve_seed(args):
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("SLOG_LAB_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"SLOG_LAB_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def parse_start(text, seed):
    if text is None or text == "uninformed":
        return "uninformed"
    if text == "random":
        return RandomStart(seed=seed)
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"--start must be 'uninformed', 'random' or a number, got {text!r}") from None


def sim_problem(args, seed):
    spec = SimulationSpec(args.n, args.p, args.rho, parse_rule(args.rule), args.snr, seed)
    return generate(spec)[0]


def input_problem(args, seed):
    if args.x or args.y:
        if not (args.x and args.y):
            raise UsageError("--x and --y must be given together")
        return load_problem(args.x, args.y)
    if args.n is None or args.p is None:
        raise UsageError("give either --x/--y files or --n/--p simulation flags")
    return sim_problem(args, seed)


def pick_lambda(problem, args):
    if args.lam is not None:
        if not args.lam > 0:
            raise UsageError("--lambda must be > 0")
        return args.lam
    if args.s is not None:
        return calibrate_lambda(problem, SparsityTarget(args.s)).lam
    raise UsageError("give --lambda or --s")


def solver_config(args, start, reference=None):
    return SolverConfig(
        start=start, step_tol=args.step_tol, max_iter=args.max_iter, theta=args.theta,
        inversion=args.inversion, reference=reference,
    )


# -- subcommands -------------------------------------------------------------------------


def cmd_simulate(args):
    seed = resolve_seed(args)
    spec = SimulationSpec(args.n, args.p, args.rho, parse_rule(args.rule), args.snr, seed)
    X, y, beta = generate_raw(spec)
    prefix = args.out
    write_table(f"{prefix}_X.csv", [f"x{j + 1}" for j in range(spec.p)], X.tolist())
    write_table(f"{prefix}_y.csv", ["y"], [[v] for v in y.tolist()])
    write_table(f"{prefix}_beta.csv", ["beta"], [[v] for v in beta.tolist()])
    meta = {
        "schema": SCHEMA, "n": spec.n, "p": spec.p, "rho": spec.rho, "rule": rule_name(spec.rule),
        "snr": spec.snr, "seed": seed,
    }
    write_json(f"{prefix}_meta.json", meta)
    print(f"wrote {prefix}_X.csv, {prefix}_y.csv, {prefix}_beta.csv, {prefix}_meta.json")
    return 0


def _groups(args, p):
    size = args.group_size
    if size < 1:
        raise UsageError("--group-size must be >= 1")
    return tuple(range(i, min(i + size, p)) for i in range(0, p, size))


def run_solver(args, problem, lam, seed):
    """Return (result, penalty, config echo) for the chosen algorithm."""
    start = parse_start(args.start, seed)
    cfg = solver_config(args, start)
    algo = args.algorithm
    if algo == "slog":
        return solve_slog(problem, lam, cfg), Lasso(lam), asdict(cfg)
    if algo == "cd":
        cd = CdConfig(path_length=args.path_length, objective_tol=args.cd_tol, max_sweeps=args.max_iter)
        return solve_cd(problem, lam, cd), Lasso(lam), asdict(cd)
    if algo == "ista":
        return run_ista(problem, Lasso(lam), tol=args.oracle_tol), Lasso(lam), {"tol": args.oracle_tol}
    if algo == "lai":
        res = solve_lai_irls(problem, lam, tol=args.step_tol, start=start, max_iter=args.max_iter, inversion=args.inversion)
        return res, Lasso(lam), {"tol": args.step_tol, "start": start}
    if algo == "aslog":
        sched = AnnealSchedule(args.sigma2, args.decay, seed)
        return solve_aslog(problem, lam, sched, cfg), Lasso(lam), {**asdict(cfg), **asdict(sched)}
    if algo == "enet":
        pen = ElasticNet(lam, args.lambda2)
        return solve_enet_slog(problem, lam, args.lambda2, cfg), pen, {**asdict(cfg), "lambda2": args.lambda2}
    if algo == "group":
        pen = GroupLasso(lam, _groups(args, problem.p))
        return solve_group_slog(problem, lam, pen, cfg), pen, {**asdict(cfg), "group_size": args.group_size}
    if algo == "hybrid":
        half = problem.p // 2
        blocks = [range(half), range(half, problem.p)] if half else [range(problem.p)]
        return solve_hybrid(problem, lam, BlockPartition(blocks), cfg), Lasso(lam), asdict(cfg)
    raise UsageError(f"unknown algorithm {algo!r}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, RandomStart):
        return asdict(obj)
    return obj


def cmd_solve(args):
    seed = resolve_seed(args)
    problem = load_problem(args.x, args.y)
    lam = pick_lambda(problem, args)
    exit_code = 0
    try:
        res, penalty, echo = run_solver(args, problem, lam, seed)
    except NotConverged as exc:
        res = exc.result
        penalty = ElasticNet(lam, args.lambda2) if args.algorithm == "enet" else (
            GroupLasso(lam, _groups(args, problem.p)) if args.algorithm == "group" else Lasso(lam))
        echo = {"algorithm": args.algorithm}
        exit_code = 0 if args.allow_partial else 1
    b = res.coefficients
    intercept, raw = problem.standardization.to_original(b)
    kkt = kkt_check(problem, penalty, b).max_violation
    payload = {
        "schema": SCHEMA,
        "algorithm": res.algorithm or args.algorithm,
        "lambda": lam,
        "iterations": int(res.iterations),
        "converged": bool(res.converged),
        "reason": res.reason,
        "kkt_max_violation": kkt,
        "wall_time_ms": res.wall_time * 1e3,
        "intercept": intercept,
        "coefficients": raw.tolist(),
        "coefficients_standardized": b.tolist(),
        "config": _jsonable({**echo, "seed": seed}),
    }
    write_json(args.out, payload)
    print(
        f"{payload['algorithm']}: lambda={lam:.6g} iterations={res.iterations} "
        f"converged={res.converged} nonzeros={int(np.count_nonzero(b))} kkt={kkt:.3g}"
    )
    return exit_code


def cmd_path(args):
    seed = resolve_seed(args)
    problem = input_problem(args, seed)
    lmax = lambda_max(problem)
    if lmax == 0:
        raise UsageError("response is orthogonal to every column; the path is trivial")
    lams = lambda_path(lmax, lmax * args.min_ratio, args.n_lambdas)
    b = np.zeros(problem.p)
    rows = []
    for lam in lams:
        if args.algorithm == "cd":
            res = solve_cd(problem, lam, CdConfig(lambda_sequence=[lam], start=b.copy(), objective_tol=args.cd_tol))
        elif args.algorithm == "rslog":
            res = solve_slog(problem, lam, solver_config(args, "uninformed"))
        else:
            res = run_ista(problem, Lasso(lam), tol=args.oracle_tol, start=b)
        b = res.coefficients
        pen = Lasso(lam)
        rows.append([lam, int(np.count_nonzero(b)), objective(problem, pen, b),
                     kkt_check(problem, pen, b).max_violation, int(res.iterations), *b.tolist()])
    header = ["lambda", "nonzeros", "objective", "kkt_violation", "iterations"] + [f"x{j + 1}" for j in range(problem.p)]
    write_table(args.out, header, rows)
    print(f"wrote {len(rows)} path points to {args.out}")
    return 0


def cmd_bench(args):
    from .bench import ExperimentGrid, run_grid

    seed = resolve_seed(args)
    algos = []
    for a in args.algorithms.split(","):
        key = a.strip().lower()
        if key not in BENCH_NAMES:
            raise UsageError(f"unknown algorithm {a!r}")
        algos.append(BENCH_NAMES[key])
    configs = {}
    if args.cd_single:
        configs["CD"] = CdConfig(path_length=1, start="uninformed")
    grid = ExperimentGrid(
        s=args.s, rho=args.rho, n=args.n, p=args.p, replicates=args.replicates, algorithms=tuple(algos),
        configs=configs, mode=args.mode, reference_bound=args.bound, seed=seed,
    )
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    records = run_grid(grid, jobs=args.jobs)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [
        [r.s, r.rho, r.n, r.p, r.replicate, r.seed, r.algorithm, r.iterations, r.wall_time * 1e3,
         r.dist_to_ref, r.kkt_violation, r.nonzeros, str(r.converged).lower()]
        for r in records
    ]
    write_table(out / "runs.csv", RUNS_HEADER, rows)
    failed = sum(not r.converged for r in records)
    print(f"wrote {len(rows)} runs to {out / 'runs.csv'} ({failed} not converged)")
    return 0


def cmd_cv(args):
    from .bench import cross_validate

    seed = resolve_seed(args)
    problem = input_problem(args, seed)
    if args.folds < 2 or args.folds > problem.n:
        raise UsageError(f"--folds must lie in [2, n = {problem.n}]")
    points = cross_validate(problem, args.s_grid, args.folds, seed)
    rows = []
    for pt in points:
        rows.extend([pt.s, f, m] for f, m in enumerate(pt.fold_mse))
        rows.append([pt.s, "mean", pt.mse])
    write_table(args.out, ["s", "fold", "mse"], rows)
    best = min(points, key=lambda q: q.mse)
    print(f"lowest cross-validated MSE {best.mse:.6g} at s={best.s:g}")
    return 0


def cmd_compare(args):
    seed = resolve_seed(args)
    problem = input_problem(args, seed)
    cal = calibrate_lambda(problem, SparsityTarget(args.s))
    lam, ref = cal.lam, cal.solution
    start = parse_start(args.start, seed)
    reference = (ref, args.bound)
    rows = []
    for name in args.algorithms.split(","):
        name = name.strip().lower()
        try:
            if name in ("slog", "rslog"):
                theta = 0.0 if name == "slog" else args.theta
                cfg = replace(solver_config(args, start, reference), theta=theta)
                res = solve_slog(problem, lam, cfg)
            elif name == "cd":
                res = solve_cd(problem, lam, CdConfig(path_length=1, start=start, max_sweeps=args.max_iter), reference=reference)
            else:
                raise UsageError(f"compare supports slog, rslog and cd, not {name!r}")
        except NotConverged as exc:
            res = exc.result
        tr = res.trace
        label = res.algorithm
        init = initial_vector(problem, lam, start)
        rows.append([0, label, relative_distance(init, ref), objective(problem, Lasso(lam), init), int(np.count_nonzero(init))])
        for k in range(len(tr)):
            rows.append([k + 1, label, tr.dist_ref[k], tr.objective[k], tr.active[k]])
    write_table(args.out, ["iteration", "algorithm", "dist_to_ref", "objective", "active_count"], rows)
    print(f"wrote {len(rows)} trace rows to {args.out}")
    return 0


# -- parser ------------------------------------------------------------------------------


def _sim_flags(p, required):
    p.add_argument("--n", type=int, required=required)
    p.add_argument("--p", type=int, required=required)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--rule", default="alternating", help="alternating | constant:V | subset:F:V | uniform:A:B")
    p.add_argument("--snr", type=float, default=3.0)


def _solver_flags(p):
    p.add_argument("--theta", type=float, default=1e-13)
    p.add_argument("--step-tol", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int, default=1_000_000)
    p.add_argument("--inversion", choices=INVERSIONS, default="auto")
    p.add_argument("--start", default=None, help="uninformed (default), random, or a constant")
    p.add_argument("--cd-tol", type=float, default=1e-13)
    p.add_argument("--oracle-tol", type=float, default=1e-10)


def build_parser():
    parser = argparse.ArgumentParser(prog="sloglab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic dataset as CSV files")
    _sim_flags(p, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="sim", help="output prefix")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", help="fit one penalized regression")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--s", type=float, help="calibrate lambda to this sparsity level instead")
    p.add_argument("--lambda2", type=float, default=0.0)
    p.add_argument("--group-size", type=int, default=1)
    p.add_argument("--algorithm", choices=SOLVE_ALGORITHMS, default="slog")
    _solver_flags(p)
    p.add_argument("--path-length", type=int, default=50)
    p.add_argument("--sigma2", type=float, default=1e-7)
    p.add_argument("--decay", type=float, default=0.99)
    p.add_argument("--allow-partial", action="store_true", help="exit 0 even if the solver hits its cap")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="result.json")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("path", help="lasso solutions on a log-spaced lambda grid")
    p.add_argument("--x")
    p.add_argument("--y")
    _sim_flags(p, required=False)
    p.add_argument("--algorithm", choices=("cd", "rslog", "ista"), default="cd")
    p.add_argument("--n-lambdas", type=int, default=50)
    p.add_argument("--min-ratio", type=float, default=1e-3)
    _solver_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="path.csv")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("bench", help="run an experiment grid and write runs.csv")
    p.add_argument("--s", type=float_list, default=[0.5])
    p.add_argument("--rho", type=float_list, default=[0.5])
    p.add_argument("--n", type=int_list, default=[100])
    p.add_argument("--p", type=int_list, default=[300])
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--algorithms", default="slog,cd")
    p.add_argument("--mode", choices=("free", "reference"), default="reference")
    p.add_argument("--bound", type=float, default=1e-3)
    p.add_argument("--cd-single", action="store_true", help="run CD at the target lambda only, from the uninformed start")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("cv", help="cross-validated prediction error over sparsity levels")
    p.add_argument("--x")
    p.add_argument("--y")
    _sim_flags(p, required=False)
    p.add_argument("--s-grid", type=float_list, default=[0.5, 0.75, 0.9, 1.0])
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="cv.csv")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("compare", help="per-iteration distance traces for SLOG and CD")
    p.add_argument("--x")
    p.add_argument("--y")
    _sim_flags(p, required=False)
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--algorithms", default="slog,cd")
    p.add_argument("--bound", type=float, default=1e-6, help="stop once this close to the reference")
    _solver_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="compare.csv")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sloglab: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"sloglab: I/O error: {exc}", file=sys.stderr)
        return 3
    except (NotConverged, Unachievable, np.linalg.LinAlgError) as exc:
        print(f"sloglab: solver failure: {exc}", file=sys.stderr)
        return 1
    except (SlogError, ValueError) as exc:
        print(f"sloglab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
