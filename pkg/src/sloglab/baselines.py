"""Comparator solvers: coordinate descent, Lai IRLS and a proximal-gradient oracle."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numba
import numpy as np
from scipy import linalg

from .core import (
    ElasticNet,
    GroupLasso,
    InvalidPenalty,
    Lasso,
    NotConverged,
    kkt_check,
    objective,
    relative_distance,
)
from .slog import SolverResult, Trace, initial_vector, weighted_solve


def lambda_max(problem):
    """Smallest lambda whose lasso solution is the zero vector: ``max |X^T y|``."""
    return float(np.max(np.abs(problem.xty)))


def lambda_path(lam_max, lam, length=50):
    """Log-spaced decreasing sequence from ``lam_max`` down to ``lam`` (inclusive)."""
    if length < 1:
        raise ValueError("path length must be >= 1")
    if length == 1 or lam >= lam_max:
        return np.array([lam], dtype=float)
    seq = np.geomspace(lam_max, lam, length)
    seq[-1] = lam
    return seq


@dataclass
class CdConfig:
    """Settings for pathwise coordinate descent.

    ``lambda_sequence=None`` means a 50-point log-spaced path from
    ``lambda_max`` to the target.  ``start=None`` starts from zero; any value
    accepted by :func:`sloglab.slog.initial_vector` is also allowed.
    """

    lambda_sequence: np.ndarray | None = None
    path_length: int = 50
    objective_tol: float = 1e-13
    max_sweeps: int = 10_000_000
    active_set_shortcut: bool = True
    start: object = None
    retain_iterates: bool = False


@numba.njit(cache=True)
def _cd_chunk(G, xty, yty, b, lams, lam_idx, tol_abs, max_sweeps, shortcut, ref, ref_dist, use_ref):
    p = b.shape[0]
    last = lams.shape[0] - 1
    act = np.empty(p, dtype=np.int64)
    m = 0
    for j in range(p):
        if b[j] != 0.0:
            act[m] = j
            m += 1
    obj = np.empty(max_sweeps)
    step = np.empty(max_sweeps)
    nact = np.empty(max_sweeps, dtype=np.int64)
    dist = np.empty(max_sweeps)
    lamrec = np.empty(max_sweeps)
    old = b.copy()
    ref_norm = 0.0
    for j in range(p):
        ref_norm += ref[j] * ref[j]
    ref_norm = math.sqrt(ref_norm)
    done = False
    s = 0
    while s < max_sweeps:
        lam = lams[lam_idx]
        maxchange = 0.0
        for j in range(p):
            old[j] = b[j]
        for j in range(p):
            acc = 0.0
            if shortcut:
                for t in range(m):
                    k = act[t]
                    if k != j:
                        acc += G[j, k] * b[k]
            else:
                for k in range(p):
                    if k != j:
                        acc += G[j, k] * b[k]
            u = xty[j] - acc
            if u > lam:
                new = (u - lam) / G[j, j]
            elif u < -lam:
                new = (u + lam) / G[j, j]
            else:
                new = 0.0
            if new != b[j]:
                delta = new - b[j]
                change = G[j, j] * delta * delta
                if change > maxchange:
                    maxchange = change
                was_zero = b[j] == 0.0
                b[j] = new
                if was_zero and new != 0.0:
                    # insert j keeping act ascending
                    t = m
                    while t > 0 and act[t - 1] > j:
                        act[t] = act[t - 1]
                        t -= 1
                    act[t] = j
                    m += 1
                elif new == 0.0 and not was_zero:
                    t = 0
                    while act[t] != j:
                        t += 1
                    while t < m - 1:
                        act[t] = act[t + 1]
                        t += 1
                    m -= 1
        # objective at the current lambda via the Gram matrix
        quad = 0.0
        lin = 0.0
        l1 = 0.0
        for t in range(m):
            k = act[t]
            lin += b[k] * xty[k]
            l1 += abs(b[k])
            row = 0.0
            for v in range(m):
                row += G[k, act[v]] * b[act[v]]
            quad += b[k] * row
        obj[s] = yty - 2.0 * lin + quad + 2.0 * lam * l1
        dn = 0.0
        on = 0.0
        dr = 0.0
        for j in range(p):
            dn += (b[j] - old[j]) ** 2
            on += old[j] * old[j]
            dr += (b[j] - ref[j]) ** 2
        dn = math.sqrt(dn)
        on = math.sqrt(on)
        step[s] = dn / on if on >= 1e-300 else dn
        dist[s] = math.sqrt(dr) / ref_norm if ref_norm > 1e-300 else math.sqrt(dr)
        nact[s] = m
        lamrec[s] = lam
        s += 1
        if lam_idx == last:
            if use_ref:
                if dist[s - 1] <= ref_dist:
                    done = True
                    break
            elif maxchange < tol_abs:
                done = True
                break
        elif maxchange < tol_abs:
            lam_idx += 1
    return lam_idx, done, s, obj[:s], step[:s], nact[:s], dist[:s], lamrec[:s]


def solve_cd(problem, lam, config=None, reference=None):
    """Pathwise cyclic coordinate descent with warm starts.

    Each coordinate step is the exact univariate minimizer
    ``soft(x_j^T r_j, lam) / (x_j^T x_j)``.  Sweeps visit coordinates in
    ascending order; with ``active_set_shortcut`` the partial-residual inner
    product only sums over the current nonzero coordinates.  ``reference``
    is an optional ``(vector, distance)`` pair: the run then stops once the
    final-lambda iterate is within that relative distance.
    """
    config = config or CdConfig()
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    if config.lambda_sequence is None:
        lams = lambda_path(lambda_max(problem), lam, config.path_length)
    else:
        lams = np.asarray(config.lambda_sequence, dtype=float)
        if lams.ndim != 1 or lams.size == 0 or np.any(lams <= 0):
            raise ValueError("lambda_sequence must be a nonempty sequence of positive values")
        if np.any(np.diff(lams) >= 0):
            raise ValueError("lambda_sequence must be strictly decreasing")
        if lams[-1] != lam:
            raise ValueError("lambda_sequence must end at the target lambda")
    b = np.zeros(problem.p) if config.start is None else initial_vector(problem, lam, config.start)
    G = np.ascontiguousarray(problem.gram)
    xty = np.ascontiguousarray(problem.xty)
    yty = float(problem.response @ problem.response)
    tol_abs = config.objective_tol * yty
    if reference is None:
        ref, ref_dist, use_ref = np.zeros(problem.p), 0.0, False
    else:
        ref, ref_dist, use_ref = np.asarray(reference[0], dtype=float), float(reference[1]), True

    trace = Trace(snapshots=[] if config.retain_iterates else None)
    trace.snapshot(0, b)
    lam_idx = 0
    done = False
    total = 0
    t0 = time.perf_counter()
    while not done and total < config.max_sweeps:
        if config.retain_iterates:
            chunk = 1 if total < 1000 else 100 - total % 100
        else:
            chunk = 8192
        chunk = min(chunk, config.max_sweeps - total)
        lam_idx, done, s, obj, step, nact, dist, lamrec = _cd_chunk(
            G, xty, yty, b, lams, lam_idx, tol_abs, chunk, config.active_set_shortcut, ref, ref_dist, use_ref
        )
        total += s
        trace.objective.extend(obj.tolist())
        trace.step.extend(step.tolist())
        trace.active.extend(nact.tolist())
        trace.dist_ref.extend(dist.tolist() if use_ref else [math.nan] * s)
        trace.lam.extend(lamrec.tolist())
        trace.snapshot(total, b)
    wall = time.perf_counter() - t0
    result = SolverResult(b.copy(), total, done, "reference" if (done and use_ref) else ("objective_tol" if done else "max_iter"), trace, wall, lam, "CD")
    if not done:
        raise NotConverged(result)
    return result


# -- proximal-gradient oracle ------------------------------------------------------


def _power_iteration(G, iters=500, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(G.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        if abs(nw - est) <= 1e-12 * nw:
            est = nw
            break
        est = nw
    return est


def _penalty_parts(penalty, p):
    """Return (l1 weight, ridge weight, groups or None)."""
    if isinstance(penalty, Lasso):
        return penalty.lam, 0.0, None
    if isinstance(penalty, ElasticNet):
        return penalty.lam1, penalty.lam2, None
    if isinstance(penalty, GroupLasso):
        penalty.validate(p)
        return penalty.lam, 0.0, penalty.groups
    raise InvalidPenalty(f"unknown penalty {penalty!r}")


def _prox(v, t, groups):
    if groups is None:
        return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    out = np.zeros_like(v)
    for g in groups:
        nrm = np.linalg.norm(v[g])
        if nrm > t:
            out[g] = v[g] * (1.0 - t / nrm)
    return out


def _polish(problem, lam1, lam2, b):
    """Re-solve the stationarity equations exactly on the support/sign pattern of ``b``."""
    S = np.flatnonzero(b)
    if S.size == 0 or S.size > problem.n + (problem.n if lam2 > 0 else 0):
        return None
    sgn = np.sign(b[S])
    M = problem.gram[np.ix_(S, S)].copy()
    M[np.diag_indices_from(M)] += lam2
    rhs = problem.xty[S] - lam1 * sgn
    try:
        cf = linalg.cho_factor(M, lower=True)
    except linalg.LinAlgError:
        return None
    x = linalg.cho_solve(cf, rhs)
    for _ in range(2):  # iterative refinement
        x += linalg.cho_solve(cf, rhs - M @ x)
    if np.any(np.sign(x) != sgn):
        return None
    out = np.zeros(problem.p)
    out[S] = x
    return out


def solve_ista(problem, penalty, tol=1e-10, max_iter=2_000_000, start=None, check_every=25):
    """Oracle coefficient vector; see :func:`run_ista`."""
    return run_ista(problem, penalty, tol, max_iter, start, check_every).coefficients


def run_ista(problem, penalty, tol=1e-10, max_iter=2_000_000, start=None, check_every=25):
    """Certified reference solution by accelerated proximal gradient.

    Minimizes the penalized objective with step ``1/L`` where ``L`` is the
    largest eigenvalue of the smooth part's Hessian (``2 X^T X`` plus the
    ridge term), FISTA momentum with function-value restarts, and a
    support-restricted exact re-solve for lasso/elastic net once the support
    has settled.  The returned coefficients have KKT violation at most ``tol``.
    """
    t0 = time.perf_counter()

    def done(v, it):
        return SolverResult(v, it, True, "kkt", Trace(), time.perf_counter() - t0, lam1, "ISTA")

    lam1, lam2, groups = _penalty_parts(penalty, problem.p)
    G, xty = problem.gram, problem.xty
    L = 2.0 * _power_iteration(G) * (1.0 + 1e-6) + 2.0 * lam2
    if L == 0:
        return done(np.zeros(problem.p), 0)
    b = np.zeros(problem.p) if start is None else np.array(start, dtype=float)
    if kkt_check(problem, penalty, b, tol).optimal:
        return done(b, 0)

    def smooth(v):
        return float(v @ (G @ v)) - 2.0 * float(v @ xty) + lam2 * float(v @ v)

    def full(v):
        pen = np.abs(v).sum() if groups is None else sum(np.linalg.norm(v[g]) for g in groups)
        return smooth(v) + 2.0 * lam1 * pen

    z = b.copy()
    t_mom = 1.0
    f_old = full(b)
    last_support = None
    for it in range(1, max_iter + 1):
        grad = 2.0 * (G @ z - xty) + 2.0 * lam2 * z
        new = _prox(z - grad / L, 2.0 * lam1 / L, groups)
        f_new = full(new)
        if f_new > f_old + 1e-12 * abs(f_old):
            # momentum overshoot: restart from the last iterate
            z = b.copy()
            t_mom = 1.0
            grad = 2.0 * (G @ z - xty) + 2.0 * lam2 * z
            new = _prox(z - grad / L, 2.0 * lam1 / L, groups)
            f_new = full(new)
            if f_new > f_old + 1e-12 * abs(f_old):
                L *= 2.0  # guard against an underestimated Lipschitz constant
                continue
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_mom * t_mom))
        z = new + ((t_mom - 1.0) / t_next) * (new - b)
        b, t_mom, f_old = new, t_next, f_new
        if it % check_every == 0:
            if kkt_check(problem, penalty, b, tol).optimal:
                return done(b, it)
            if groups is None:
                support = tuple(np.flatnonzero(b))
                if support == last_support:
                    pol = _polish(problem, lam1, lam2, b)
                    if pol is not None and kkt_check(problem, penalty, pol, tol).optimal:
                        return done(pol, it)
                last_support = support
    result = SolverResult(b, max_iter, False, "max_iter", Trace(), time.perf_counter() - t0, lam1, "ISTA")
    raise NotConverged(result, f"oracle did not reach KKT tolerance {tol}")


# -- Lai IRLS ------------------------------------------------------------------------


def lai_epsilon(eps_prev, beta, alpha, h):
    """``min(eps_prev, alpha * r_{h+1})`` with ``r_{h+1}`` the (h+1)-th largest ``|beta_j|``."""
    mags = np.sort(np.abs(beta))[::-1]
    return min(eps_prev, alpha * mags[h])


def lai_step(problem, lam, beta, eps, inversion="auto"):
    """One IRLS solve with weights ``lam / sqrt(eps^2 + beta_j^2)``; infinite weights pin zeros."""
    active = np.flatnonzero(beta) if eps == 0 else np.arange(problem.p)
    return weighted_solve(problem, active, lambda a: lam / np.sqrt(eps * eps + beta[a] ** 2), inversion)


def solve_lai_irls(
    problem, lam, alpha=0.9, h=None, tol=1e-6, eps0=1.0, start=None, max_iter=100_000,
    inversion="auto", fixed_iterations=None, reference=None, retain_iterates=False,
):
    """Lai's IRLS lasso solver with adaptive smoothing ``eps_k``.

    ``eps0 = 0`` keeps ``eps_k`` at zero for the whole run.  ``h`` defaults
    to ``min(p - 1, 10)``.  With ``fixed_iterations`` the stopping rule is
    replaced by an exact iteration count; ``reference`` is a
    ``(vector, distance)`` pair that replaces it by a distance bound.
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if eps0 < 0:
        raise ValueError("eps0 must be >= 0")
    p = problem.p
    if h is None:
        h = min(p - 1, 10)
    if not 0 <= h < p:
        raise ValueError("need 0 <= h < p")
    beta = np.zeros(p) if start is None else initial_vector(problem, lam, start)
    penalty = Lasso(lam)
    ref = None if reference is None else np.asarray(reference[0], dtype=float)
    trace = Trace(snapshots=[] if retain_iterates else None)
    trace.snapshot(0, beta)
    eps = eps0
    t0 = time.perf_counter()
    converged, reason = False, "max_iter"
    limit = fixed_iterations if fixed_iterations is not None else max_iter
    k = 0
    for k in range(1, limit + 1):
        new = lai_step(problem, lam, beta, eps, inversion)
        nb = np.linalg.norm(beta)
        d = np.linalg.norm(new - beta) / nb if nb >= 1e-300 else np.linalg.norm(new - beta)
        dist = relative_distance(new, ref) if ref is not None else math.nan
        trace.append(objective(problem, penalty, new), d, int(np.count_nonzero(new)), dist, lam)
        trace.snapshot(k, new)
        beta = new
        if eps > 0:
            eps = lai_epsilon(eps, beta, alpha, h)
        if fixed_iterations is not None:
            continue
        if ref is not None:
            if dist <= reference[1]:
                converged, reason = True, "reference"
                break
        elif d < tol:
            converged, reason = True, "step_tol"
            break
    if fixed_iterations is not None:
        converged, reason = True, "fixed_iterations"
    result = SolverResult(beta, k, converged, reason, trace, time.perf_counter() - t0, lam, "LaiIRLS")
    result.epsilon = eps
    if not converged:
        raise NotConverged(result)
    return result


def lasso_reference(problem, lam, tol=1e-10, start=None):
    """Oracle lasso solution certified to KKT ``tol``."""
    return solve_ista(problem, Lasso(lam), tol=tol, start=start)


def distance_to(b, ref):
    return relative_distance(b, ref)
