"""SLOG-style solvers for the elastic net and group lasso, annealed SLOG and the block hybrid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import CdConfig, solve_cd
from .core import ElasticNet, GroupLasso, InvalidPenalty, Lasso, objective
from .slog import SolverConfig, SolverResult, Trace, initial_vector, run_fixed_point, solve_slog, weighted_solve
from .simdata import make_rng


def solve_enet_slog(problem, lam1, lam2, config=None):
    """Elastic-net SLOG: active coordinates solve ``(G_A + lam2 I + lam1 diag(1/|b_A|)) b = (X^T y)_A``."""
    config = config or SolverConfig()
    penalty = ElasticNet(lam1, lam2)

    def step(b, k):
        return weighted_solve(problem, np.flatnonzero(b), lambda a: lam1 / np.abs(b[a]), config.inversion, ridge=lam2)

    return run_fixed_point(problem, step, lambda v: objective(problem, penalty, v), config, "ENetSLOG", lam1)


def solve_group_slog(problem, lam, groups, config=None):
    """Group-lasso SLOG.

    Each member of group ``m`` gets the diagonal weight ``lam / ||b_(m)||``.
    A group whose norm drops to ``config.theta`` or below is zeroed as a
    whole and stays out of the system for the rest of the run.
    """
    config = config or SolverConfig()
    penalty = groups if isinstance(groups, GroupLasso) else GroupLasso(lam, tuple(groups))
    if penalty.lam != lam:
        penalty = GroupLasso(lam, penalty.groups)
    penalty.validate(problem.p)
    gidx = penalty.groups
    owner = np.empty(problem.p, dtype=int)
    for m, g in enumerate(gidx):
        owner[g] = m

    def norms(b):
        return np.array([math.sqrt(float(b[g] @ b[g])) for g in gidx])

    def step(b, k):
        nrm = norms(b)
        active = np.flatnonzero(nrm[owner] > 0)
        return weighted_solve(problem, active, lambda a: lam / nrm[owner[a]], config.inversion)

    theta = config.theta

    def threshold(v):
        nrm = norms(v)
        for m in np.flatnonzero(nrm <= theta):
            v[gidx[m]] = 0.0
        return v

    return run_fixed_point(
        problem, step, lambda v: objective(problem, penalty, v), config, "GroupSLOG", lam, threshold=threshold
    )


# -- annealed SLOG ----------------------------------------------------------------


@dataclass(frozen=True)
class AnnealSchedule:
    """``sigma2_k = sigma2_init * decay**k``; ``sigma2_init = 0`` gives plain SLOG steps."""

    sigma2_init: float = 1e-7
    decay: float = 0.99
    seed: int = 0

    def __post_init__(self):
        if not (self.sigma2_init >= 0 and math.isfinite(self.sigma2_init)):
            raise ValueError("sigma2_init must be finite and >= 0")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")

    def sigma2(self, k):
        return self.sigma2_init * self.decay**k


def sample_inverse_gaussian(rng, mean, shape, size=None):
    """Inverse-Gaussian draws by the chi-square transform with a uniform root choice.

    The smaller root of the transformed quadratic is written as
    ``2 shape mean / (2 shape + y + sqrt(y^2 + 4 shape y))`` with
    ``y = mean * nu^2``, which stays positive and accurate even when
    ``y`` dwarfs ``shape`` (where the textbook form cancels).
    """
    mean = np.asarray(mean, dtype=float)
    shape = np.asarray(shape, dtype=float)
    if size is None:
        size = np.broadcast(mean, shape).shape
    nu = rng.standard_normal(size)
    u = rng.random(size)
    y = mean * nu * nu
    x = 2.0 * shape * mean / (2.0 * shape + y + np.sqrt(y * y + 4.0 * shape * y))
    return np.where(u <= mean / (mean + x), x, mean * mean / x)


def solve_aslog(problem, lam, schedule=None, config=None):
    """Annealed SLOG: the weights ``1/|b_j|`` are replaced by inverse-Gaussian draws.

    At step ``k`` the draw for coordinate ``j`` has mean ``1/|b_j|`` and shape
    ``1/sigma2_k``.  Runs are reproducible for a fixed ``schedule.seed``.
    """
    schedule = schedule or AnnealSchedule()
    config = config or SolverConfig()
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    rng = make_rng(schedule.seed)
    penalty = Lasso(lam)

    def step(b, k):
        s2 = schedule.sigma2(k - 1)

        def weights(a):
            if s2 == 0.0:
                return lam / np.abs(b[a])
            return lam * sample_inverse_gaussian(rng, 1.0 / np.abs(b[a]), 1.0 / s2)

        return weighted_solve(problem, np.flatnonzero(b), weights, config.inversion)

    return run_fixed_point(problem, step, lambda v: objective(problem, penalty, v), config, "aSLOG", lam)


# -- block hybrid -------------------------------------------------------------------

SOLVERS = ("SLOG", "CD")


@dataclass
class BlockPartition:
    blocks: list
    solvers: list = field(default_factory=list)

    def __post_init__(self):
        self.blocks = [np.array(sorted(set(int(i) for i in b)), dtype=int) for b in self.blocks]
        if not self.solvers:
            self.solvers = ["SLOG"] * len(self.blocks)
        self.solvers = [s.upper() for s in self.solvers]
        if len(self.solvers) != len(self.blocks):
            raise ValueError("need one solver per block")
        if any(s not in SOLVERS for s in self.solvers):
            raise ValueError(f"block solvers must be in {SOLVERS}")
        if not self.blocks or any(b.size == 0 for b in self.blocks):
            raise ValueError("blocks must be nonempty")

    def validate(self, p):
        allidx = np.concatenate(self.blocks)
        if allidx.size != p or not np.array_equal(np.sort(allidx), np.arange(p)):
            raise InvalidPenalty("blocks must partition {0..p-1} exactly once")


def blocks_orthogonal(problem, blocks, tol=1e-10):
    """True when every cross-block Gram entry is at most ``tol`` in magnitude."""
    G = problem.gram
    for i in range(len(blocks)):
        for j in range(i + 1, len(blocks)):
            if np.max(np.abs(G[np.ix_(blocks[i], blocks[j])])) > tol:
                return False
    return True


def _extend(trace, other):
    for name in ("objective", "step", "active", "dist_ref", "lam"):
        getattr(trace, name).extend(getattr(other, name))


def solve_hybrid(problem, lam, partition, config=None, cd_config=None, ortho_tol=1e-10, max_restarts=3):
    """Solve column blocks separately, then reconcile with a full rSLOG pass if needed.

    When the blocks are mutually orthogonal the block solutions are simply
    concatenated.  Otherwise coordinates zeroed in the block fits restart at
    ``sign((X^T r)_j) * max(1e3 theta, 1e-6)`` and rSLOG runs on the whole
    problem from the combined vector.  Nonzero coordinates that end that
    pass below the restart magnitude are set to zero when their gradient is
    within the lasso bound and restarted otherwise, and the pass is repeated
    (at most ``max_restarts`` extra passes).
    """
    config = config or SolverConfig()
    partition.validate(problem.p)
    orthogonal = len(partition.blocks) == 1 or blocks_orthogonal(problem, partition.blocks, ortho_tol)
    # a sliced reference is the block solution only when the blocks decouple
    ref = None if config.reference is None or not orthogonal else np.asarray(config.reference[0], dtype=float)
    block_config = config if orthogonal else replace(config, reference=None)
    combined = np.zeros(problem.p)
    start = initial_vector(problem, lam, config.start)
    trace = Trace()
    iterations = 0
    wall = 0.0
    for cols, solver in zip(partition.blocks, partition.solvers):
        sub = problem.subproblem(cols)
        sub_ref = None if ref is None else (ref[cols], config.reference[1])
        if solver == "SLOG":
            res = solve_slog(sub, lam, replace(block_config, start=start[cols], reference=sub_ref))
        else:
            res = solve_cd(sub, lam, cd_config or CdConfig(), reference=sub_ref)
        combined[cols] = res.coefficients
        _extend(trace, res.trace)
        iterations += res.iterations
        wall += res.wall_time

    if orthogonal:
        return SolverResult(combined, iterations, True, "blocks", trace, wall, lam, "Hybrid")

    restart = max(config.theta * 1e3, 1e-6)
    restart_mask = combined == 0
    for _ in range(max_restarts + 1):
        corr = problem.design.T @ (problem.response - problem.design @ combined)
        combined[restart_mask] = np.where(corr[restart_mask] >= 0, 1.0, -1.0) * restart
        final = solve_slog(problem, lam, replace(config, start=combined))
        _extend(trace, final.trace)
        iterations += final.iterations
        wall += final.wall_time
        combined = final.coefficients.copy()
        # a coordinate left below the restart magnitude moves only
        # geometrically slowly: absorb it if its gradient is inside the
        # lasso bound, otherwise restart it and run the pass again
        corr = problem.design.T @ (problem.response - problem.design @ combined)
        tiny = (combined != 0) & (np.abs(combined) < restart)
        inside = np.abs(corr) <= lam
        restart_mask = tiny & ~inside
        absorb = tiny & inside
        if not restart_mask.any() and not absorb.any():
            break
        combined[absorb] = 0.0
    return SolverResult(
        final.coefficients, iterations, final.converged, final.reason,
        trace, wall, lam, "Hybrid",
    )
