"""Experiment grids over (s, rho, n, p, algorithm), cross-validation sweeps and trace helpers."""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .baselines import CdConfig, run_ista, solve_cd, solve_ista, solve_lai_irls
from .core import ElasticNet, GroupLasso, Lasso, NotConverged, SlogError, kkt_check, relative_distance, standardize
from .simdata import Alternating, SimulationSpec, SparsityTarget, calibrate_lambda, generate, make_rng
from .slog import SolverConfig, solve_slog
from .variants import AnnealSchedule, BlockPartition, solve_aslog, solve_enet_slog, solve_group_slog, solve_hybrid

log = logging.getLogger(__name__)

ALGORITHMS = ("SLOG", "rSLOG", "CD", "ISTA", "LaiIRLS", "aSLOG", "ENetSLOG", "GroupSLOG", "Hybrid")
MODES = ("free", "reference")


class TraceNotRetained(SlogError, ValueError):
    pass


@dataclass
class ExperimentGrid:
    """Axes, replicate count and per-algorithm settings for :func:`run_grid`.

    ``configs`` maps an algorithm name to its settings: a
    :class:`SolverConfig` for the SLOG family, a :class:`CdConfig` for CD,
    and a dict of keyword options for the rest (``lam2`` for ENetSLOG,
    ``group_size`` for GroupSLOG, ``schedule`` for aSLOG, ``blocks`` for
    Hybrid, ``tol`` for ISTA and LaiIRLS).  In ``reference`` mode every
    solver stops once it is within ``reference_bound`` relative distance of
    the oracle solution.
    """

    s: list
    rho: list
    n: list
    p: list
    replicates: int = 1
    algorithms: tuple = ("SLOG", "CD")
    configs: dict = field(default_factory=dict)
    mode: str = "free"
    reference_bound: float = 1e-3
    certify_tol: float | None = None
    oracle_tol: float = 1e-10
    seed: int = 0
    snr: float = 3.0
    rule: object = field(default_factory=Alternating)

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not all(len(a) for a in (self.s, self.rho, self.n, self.p)):
            raise ValueError("grid axes must be nonempty")
        if not self.algorithms:
            raise ValueError("need at least one algorithm")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ValueError(f"unknown algorithms {bad}; choose from {ALGORITHMS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    def cells(self):
        return list(itertools.product(self.s, self.rho, self.n, self.p))


@dataclass
class RunRecord:
    s: float
    rho: float
    n: int
    p: int
    replicate: int
    seed: int
    algorithm: str
    iterations: int
    wall_time: float
    dist_to_ref: float
    kkt_violation: float
    nonzeros: int
    converged: bool
    lam: float = math.nan
    error: str = ""

    def as_row(self):
        return asdict(self)


def cell_seed(base, s, rho, n, p, replicate):
    """Deterministic 63-bit seed for one grid cell and replicate."""
    key = [int(base) & 0xFFFFFFFF, int(round(s * 1e6)), int(round(rho * 1e6)), int(n), int(p), int(replicate)]
    return int(np.random.SeedSequence(key).generate_state(1, np.uint64)[0] >> np.uint64(1))


def _penalty_for(algorithm, lam, p, opts):
    if algorithm == "ENetSLOG":
        return ElasticNet(lam, float(opts.get("lam2", 0.0)))
    if algorithm == "GroupSLOG":
        size = int(opts.get("group_size", 1))
        return GroupLasso(lam, tuple(range(i, min(i + size, p)) for i in range(0, p, size)))
    return Lasso(lam)


def _run_algorithm(algorithm, problem, lam, penalty, ref, grid, ref_nonzeros):
    opts = grid.configs.get(algorithm, {})
    bound = grid.reference_bound if grid.mode == "reference" else None
    reference = None if bound is None else (ref, bound)

    def slog_config(default_theta):
        cfg = opts if isinstance(opts, SolverConfig) else SolverConfig(theta=default_theta)
        return replace(cfg, reference=reference)

    if algorithm in ("SLOG", "rSLOG"):
        return solve_slog(problem, lam, slog_config(0.0 if algorithm == "SLOG" else 1e-13))
    if algorithm == "CD":
        return solve_cd(problem, lam, opts if isinstance(opts, CdConfig) else CdConfig(), reference=reference)
    if algorithm == "ISTA":
        return run_ista(problem, penalty, tol=float(opts.get("tol", grid.oracle_tol)))
    if algorithm == "LaiIRLS":
        h = int(opts.get("h", min(problem.p - 1, ref_nonzeros + 10)))
        return solve_lai_irls(problem, lam, h=h, tol=float(opts.get("tol", 1e-6)), start="uninformed", reference=reference)
    if algorithm == "aSLOG":
        cfg = replace(opts.get("config", SolverConfig()), reference=reference)
        return solve_aslog(problem, lam, opts.get("schedule", AnnealSchedule()), cfg)
    if algorithm == "ENetSLOG":
        cfg = replace(opts.get("config", SolverConfig()), reference=reference)
        return solve_enet_slog(problem, lam, penalty.lam2, cfg)
    if algorithm == "GroupSLOG":
        cfg = replace(opts.get("config", SolverConfig()), reference=reference)
        return solve_group_slog(problem, lam, penalty, cfg)
    if algorithm == "Hybrid":
        half = problem.p // 2
        blocks = opts.get("blocks") or ([range(half), range(half, problem.p)] if half else [range(problem.p)])
        partition = BlockPartition(blocks, list(opts.get("solvers", [])))
        cfg = replace(opts.get("config", SolverConfig()), reference=reference)
        return solve_hybrid(problem, lam, partition, cfg)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def run_cell(grid, s, rho, n, p, replicate):
    """All algorithm records for one cell and replicate."""
    seed = cell_seed(grid.seed, s, rho, n, p, replicate)
    problem, _ = generate(SimulationSpec(n, p, rho, grid.rule, grid.snr, seed))
    cal = calibrate_lambda(problem, SparsityTarget(s), tol=grid.oracle_tol)
    lam = cal.lam
    refs = {}
    records = []
    for algorithm in grid.algorithms:
        penalty = _penalty_for(algorithm, lam, p, grid.configs.get(algorithm, {}) if algorithm not in ("SLOG", "rSLOG", "CD") else {})
        if isinstance(penalty, Lasso):
            ref = cal.solution
        else:
            key = repr(penalty) if isinstance(penalty, ElasticNet) else ("group", len(penalty.groups))
            if key not in refs:
                refs[key] = solve_ista(problem, penalty, tol=grid.oracle_tol)
            ref = refs[key]
        base = dict(s=s, rho=rho, n=n, p=p, replicate=replicate, seed=seed, algorithm=algorithm, lam=lam)
        error = ""
        try:
            res = _run_algorithm(algorithm, problem, lam, penalty, ref, grid, cal.nonzeros)
            ok = res.converged
        except NotConverged as exc:
            res, ok, error = exc.result, False, "NotConverged"
        except (SlogError, np.linalg.LinAlgError) as exc:
            log.warning("%s failed on cell %s: %s", algorithm, base, exc)
            records.append(RunRecord(**base, iterations=0, wall_time=math.nan, dist_to_ref=math.nan,
                                     kkt_violation=math.nan, nonzeros=0, converged=False, error=type(exc).__name__))
            continue
        b = res.coefficients
        kkt = kkt_check(problem, penalty, b).max_violation
        if grid.certify_tol is not None and kkt > grid.certify_tol:
            ok = False
        records.append(RunRecord(
            **base, iterations=int(res.iterations), wall_time=max(res.wall_time, 1e-9),
            dist_to_ref=relative_distance(b, ref), kkt_violation=kkt, nonzeros=int(np.count_nonzero(b)),
            converged=bool(ok), error=error,
        ))
    return records


def _run_unit(args):
    return run_cell(*args)


def run_grid(grid, jobs=1):
    """Run every cell and replicate; results come back in grid order.

    ``jobs > 1`` spreads (cell, replicate) units over worker processes,
    which skews wall times under contention; keep ``jobs=1`` for timing.
    """
    units = [(grid, *cell, r) for cell in grid.cells() for r in range(grid.replicates)]
    if jobs <= 1:
        chunks = [run_cell(*u) for u in units]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_unit, units))
    return [rec for chunk in chunks for rec in chunk]


# -- cross-validation -------------------------------------------------------------


@dataclass
class CvPoint:
    s: float
    mse: float
    fold_mse: list


def fold_assignment(n, folds, seed=0):
    """Fold index per observation from a seeded permutation."""
    if folds < 2 or folds > n:
        raise ValueError(f"folds must satisfy 2 <= folds <= n (got {folds} with n = {n})")
    perm = make_rng(seed).permutation(n)
    out = np.empty(n, dtype=int)
    for f, idx in enumerate(np.array_split(perm, folds)):
        out[idx] = f
    return out


def cross_validate(problem, s_grid, folds, seed=0):
    """Held-out mean squared prediction error for each sparsity level.

    For every fold the training rows are re-standardized, the penalty is
    calibrated to ``s`` on the training rows, and the fitted lasso predicts
    the held-out rows on the original response scale.
    """
    if problem.standardization is not None:
        X = problem.standardization.raw_design(problem.design)
        y = problem.response + problem.standardization.y_mean
    else:
        X, y = problem.design, problem.response
    assign = fold_assignment(problem.n, folds, seed)
    fits = []
    for f in range(folds):
        test = assign == f
        train = standardize(X[~test], y[~test])
        fits.append((test, train))
    out = []
    for s in s_grid:
        target = SparsityTarget(s)
        fold_mse = []
        for test, train in fits:
            coef = calibrate_lambda(train, target).solution
            pred = train.standardization.predict(X[test], coef)
            fold_mse.append(float(np.mean((y[test] - pred) ** 2)))
        out.append(CvPoint(float(s), float(np.mean(fold_mse)), fold_mse))
    return out


# -- trace helpers ------------------------------------------------------------------


def effective_zero_counts(trace, cutoff=1e-13):
    """``(iterations, counts)`` of coefficients with ``|b_j| < cutoff`` in each retained snapshot."""
    if trace.snapshots is None:
        raise TraceNotRetained("run the solver with retain_iterates=True")
    ks = np.array([k for k, _ in trace.snapshots], dtype=int)
    counts = np.array([int(np.count_nonzero(np.abs(b) < cutoff)) for _, b in trace.snapshots], dtype=int)
    return ks, counts
