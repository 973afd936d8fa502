"""The SLOG fixed-point solver for the lasso and its thresholded variant (rSLOG).

One SLOG step maps ``b`` to the solution of

    (X_A^T X_A + lam * diag(1/|b_A|)) b_A_new = X_A^T y

on the active set ``A = {j : b_j != 0}``; coordinates outside ``A`` stay
exactly zero.  With ``theta > 0`` coefficients whose magnitude drops to
``theta`` or below are zeroed after each step and never revisited.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .core import (
    Lasso,
    NotConverged,
    SingularSystem,
    objective,
    relative_distance,
    soft_threshold,
)

log = logging.getLogger(__name__)

INVERSIONS = ("auto", "naive", "woodbury", "miller")


@dataclass(frozen=True)
class RandomStart:
    lower: float = -5.0
    upper: float = 5.0
    seed: int = 0


@dataclass
class SolverConfig:
    """Run settings shared by the SLOG-family solvers.

    ``start`` is ``"uninformed"``, a constant (float), an explicit vector or a
    :class:`RandomStart`.  ``reference`` is an optional ``(vector, distance)``
    pair: when given, the run stops as soon as the relative distance to the
    vector is at most ``distance`` and ``step_tol`` is ignored.
    """

    start: object = "uninformed"
    step_tol: float = 1e-3
    max_iter: int = 1_000_000
    theta: float = 1e-13
    inversion: str = "auto"
    reference: tuple | None = None
    retain_iterates: bool = False

    def __post_init__(self):
        if not self.step_tol > 0:
            raise ValueError("step_tol must be > 0")
        if not self.theta >= 0:
            raise ValueError("theta must be >= 0")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")
        if self.inversion not in INVERSIONS:
            raise ValueError(f"inversion must be one of {INVERSIONS}")


def snapshot_due(k):
    """Iterate-retention stride: every iteration up to 1000, then every 100th."""
    return k <= 1000 or k % 100 == 0


@dataclass
class Trace:
    """Per-iteration record of a solver run (one entry per iteration)."""

    objective: list = field(default_factory=list)
    step: list = field(default_factory=list)
    active: list = field(default_factory=list)
    dist_ref: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    snapshots: list | None = None

    def append(self, obj, step, active, dist_ref=math.nan, lam=math.nan):
        self.objective.append(obj)
        self.step.append(step)
        self.active.append(active)
        self.dist_ref.append(dist_ref)
        self.lam.append(lam)

    def snapshot(self, k, b):
        if self.snapshots is not None and snapshot_due(k):
            self.snapshots.append((k, b.copy()))

    def __len__(self):
        return len(self.objective)

    def as_arrays(self):
        return {
            "objective": np.asarray(self.objective, dtype=float),
            "step": np.asarray(self.step, dtype=float),
            "active": np.asarray(self.active, dtype=int),
            "dist_ref": np.asarray(self.dist_ref, dtype=float),
            "lam": np.asarray(self.lam, dtype=float),
        }


@dataclass
class SolverResult:
    coefficients: np.ndarray
    iterations: int
    converged: bool
    reason: str
    trace: Trace
    wall_time: float
    lam: float = math.nan
    algorithm: str = ""

    @property
    def nonzeros(self):
        return int(np.count_nonzero(self.coefficients))


@dataclass(frozen=True)
class SlogState:
    b: np.ndarray
    k: int = 0

    @property
    def active(self):
        return np.flatnonzero(self.b)


# -- linear algebra ----------------------------------------------------------


def _cholesky_solve(M, rhs):
    try:
        return linalg.cho_solve(linalg.cho_factor(M, lower=True, check_finite=False), rhs, check_finite=False)
    except linalg.LinAlgError:
        pass
    jitter = 1e-12 * np.trace(M) / M.shape[0]
    log.debug("cholesky failed, retrying with diagonal jitter %.3g", jitter)
    try:
        Mj = M + jitter * np.eye(M.shape[0])
        return linalg.cho_solve(linalg.cho_factor(Mj, lower=True, check_finite=False), rhs, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularSystem(f"active system of size {M.shape[0]} is not positive definite") from exc


def invert_active_system(X_act, G_act, diag, rhs, strategy="auto"):
    """Solve ``(X_act^T X_act + diag(diag)) x = rhs`` with a positive diagonal.

    ``G_act`` is ``X_act^T X_act`` (only used by the naive path and may be
    ``None`` otherwise).  ``woodbury`` factors an n x n matrix instead of the
    p* x p* one; ``miller`` builds the inverse by n successive rank-one
    updates of the diagonal part.
    """
    diag = np.asarray(diag, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if np.any(~(diag > 0)):
        raise SingularSystem("diagonal weights must be strictly positive")
    n, pa = X_act.shape
    if strategy == "auto":
        strategy = "naive" if pa <= n else "woodbury"
    if pa == 0:
        return np.zeros(0)

    if strategy == "naive":
        if G_act is None:
            G_act = X_act.T @ X_act
        M = np.array(G_act, dtype=float, copy=True)
        M[np.diag_indices_from(M)] += diag
        return _cholesky_solve(M, rhs)

    dinv = 1.0 / diag
    if strategy == "woodbury":
        # (X^T X + D)^-1 = D^-1 - D^-1 X^T (I + X D^-1 X^T)^-1 X D^-1
        u = dinv * rhs
        XD = X_act * dinv
        S = XD @ X_act.T
        S[np.diag_indices_from(S)] += 1.0
        w = _cholesky_solve(S, X_act @ u)
        return u - dinv * (X_act.T @ w)

    if strategy == "miller":
        Ainv = np.diag(dinv)
        for i in range(n):
            x = X_act[i]
            v = Ainv @ x
            denom = 1.0 + x @ v
            if not denom > 0:
                raise SingularSystem("rank-one update lost positive definiteness")
            Ainv -= np.outer(v, v) / denom
        return Ainv @ rhs

    raise ValueError(f"unknown inversion strategy {strategy!r}")


def weighted_update(problem, b, diag_fn, strategy="auto", ridge=0.0):
    """One reweighted step: active coords solve ``(G_A + ridge*I + diag) x = (X^T y)_A``.

    ``diag_fn`` receives the active index array and returns the diagonal
    penalty weights for those coordinates.
    """
    return weighted_solve(problem, np.flatnonzero(b), diag_fn, strategy, ridge)


def weighted_solve(problem, active, diag_fn, strategy="auto", ridge=0.0):
    out = np.zeros(problem.p)
    if active.size == 0:
        return out
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        diag = np.asarray(diag_fn(active), dtype=float)
    finite = np.isfinite(diag)
    if not finite.all():
        # weight overflow means |b_j| is denormal: the exact update underflows to zero
        active, diag = active[finite], diag[finite]
        if active.size == 0:
            return out
    diag = diag + ridge
    X_act = problem.design[:, active]
    naive = strategy == "naive" or (strategy == "auto" and active.size <= problem.n)
    G_act = problem.gram[np.ix_(active, active)] if naive else None
    out[active] = invert_active_system(X_act, G_act, diag, problem.xty[active], strategy)
    return out


def slog_update(problem, lam, state, inversion="auto"):
    """Apply one SLOG step to ``state``."""
    b = np.asarray(state.b, dtype=float)
    new = weighted_update(problem, b, lambda a: lam / np.abs(b[a]), inversion)
    return SlogState(new, state.k + 1)


# -- starting values -----------------------------------------------------------


def initial_vector(problem, lam, start="uninformed"):
    p = problem.p
    if isinstance(start, str):
        if start != "uninformed":
            raise ValueError(f"unknown start {start!r}")
        b = np.sign(problem.xty) * (lam / p)
        # exact zeros would be absorbed forever; nudge them off zero
        b[b == 0] = lam / p * 1e-3
        return b
    if isinstance(start, RandomStart):
        rng = np.random.Generator(np.random.Philox(start.seed))
        return rng.uniform(start.lower, start.upper, size=p)
    if np.ndim(start) == 0:
        return np.full(p, float(start))
    b = np.array(start, dtype=float)
    if b.shape != (p,):
        raise ValueError(f"explicit start has shape {b.shape}, expected ({p},)")
    return b


# -- generic fixed-point driver -------------------------------------------------


def run_fixed_point(problem, step, obj, config, algorithm, lam=math.nan, start=None, threshold=None):
    """Iterate ``b <- threshold(step(b, k))`` under the shared stopping rules.

    ``obj`` evaluates the objective recorded in the trace; ``threshold``
    defaults to coordinatewise zeroing at ``config.theta``.
    """
    b = initial_vector(problem, lam if np.isfinite(lam) else 1.0, config.start) if start is None else np.array(start, float)
    ref_vec, ref_dist = (None, None) if config.reference is None else config.reference
    if ref_vec is not None:
        ref_vec = np.asarray(ref_vec, dtype=float)
    trace = Trace(snapshots=[] if config.retain_iterates else None)
    trace.snapshot(0, b)
    if threshold is None:
        theta = config.theta

        def threshold(v):
            v[np.abs(v) <= theta] = 0.0
            return v

    t0 = time.perf_counter()
    reason = "max_iter"
    converged = False
    k = 0
    for k in range(1, int(config.max_iter) + 1):
        new = threshold(step(b, k))
        nb = np.linalg.norm(b)
        diff = np.linalg.norm(new - b)
        d = diff / nb if nb >= 1e-300 else diff
        dist = relative_distance(new, ref_vec) if ref_vec is not None else math.nan
        trace.append(obj(new), d, int(np.count_nonzero(new)), dist, lam)
        trace.snapshot(k, new)
        b = new
        if ref_vec is not None:
            if dist <= ref_dist:
                converged, reason = True, "reference"
                break
        elif d < config.step_tol:
            converged, reason = True, "step_tol"
            break
    result = SolverResult(b, k, converged, reason, trace, time.perf_counter() - t0, lam, algorithm)
    if not converged:
        raise NotConverged(result)
    return result


def solve_slog(problem, lam, config=None):
    """Run SLOG (``theta == 0``) or rSLOG (``theta > 0``) to convergence."""
    config = config or SolverConfig()
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    penalty = Lasso(lam)

    def step(b, k):
        return weighted_update(problem, b, lambda a: lam / np.abs(b[a]), config.inversion)

    name = "rSLOG" if config.theta > 0 else "SLOG"
    return run_fixed_point(problem, step, lambda v: objective(problem, penalty, v), config, name, lam)


# -- one-dimensional analytics ---------------------------------------------------


def one_d_lasso(beta_hat, lam, n):
    return soft_threshold(beta_hat, lam / n)


def one_d_step(beta_hat, lam, n, b):
    """The p = 1 recursion ``b -> |b| beta_hat / (lam/n + |b|)``."""
    return abs(b) * beta_hat / (lam / n + abs(b))


def one_d_closed_form(beta_hat, lam, n, b0, k):
    """Non-recursive value of the k-th one-dimensional SLOG iterate (k >= 1)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if b0 == 0 or beta_hat == 0:
        return 0.0
    c = n * abs(beta_hat) / lam
    sgn = math.copysign(1.0, beta_hat)
    a0 = abs(b0)
    if c <= 1.0:
        geo = math.fsum(c**m for m in range(k))
        return c**k * lam * a0 * sgn / (lam + n * a0 * geo)
    # divide through by c**k to stay finite for large c
    geo = math.fsum(c ** (-j) for j in range(1, k + 1))
    return lam * a0 * sgn / (lam * c ** (-k) + n * a0 * geo)


def one_d_rate_bound(beta_hat, lam, n, b0, k):
    """Upper bound on ``|b^(k) - lasso|`` in one dimension (b0 != 0, k >= 1)."""
    if b0 == 0:
        raise ValueError("b0 must be nonzero")
    if k < 1:
        raise ValueError("k must be >= 1")
    target = one_d_lasso(beta_hat, lam, n)
    c = n * abs(beta_hat) / lam
    if c < 1.0:
        return c**k * abs(b0 - target)
    if c == 1.0:
        return lam / (n * k)
    return (1.0 / c) ** k * abs(beta_hat / b0) * abs(b0 - target)
