"""Synthetic benchmark data and penalty calibration to a sparsity level."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import lars_path

from .baselines import lambda_max, solve_ista
from .core import Lasso, SlogError, standardize


class Unachievable(SlogError, RuntimeError):
    pass


# -- coefficient rules ---------------------------------------------------------


@dataclass(frozen=True)
class Alternating:
    """``beta_j = (-1)**j * exp(-(j - 1) / 10)`` for ``j = 1..p``."""

    def coefficients(self, p, rng):
        j = np.arange(1, p + 1)
        return np.where(j % 2 == 0, 1.0, -1.0) * np.exp(-(j - 1) / 10.0)


@dataclass(frozen=True)
class Constant:
    value: float = 0.1

    def coefficients(self, p, rng):
        return np.full(p, float(self.value))


@dataclass(frozen=True)
class SubsetConstant:
    fraction: float = 0.1
    value: float = 1.0

    def coefficients(self, p, rng):
        beta = np.zeros(p)
        beta[: int(round(self.fraction * p))] = self.value
        return beta


@dataclass(frozen=True)
class UniformRange:
    low: float = -1.0
    high: float = 1.0

    def coefficients(self, p, rng):
        return rng.uniform(self.low, self.high, size=p)


def parse_rule(text):
    """``alternating``, ``constant:V``, ``subset:F:V`` or ``uniform:A:B``."""
    name, *args = text.strip().lower().split(":")
    vals = [float(a) for a in args]
    rules = {"alternating": Alternating, "constant": Constant, "subset": SubsetConstant, "uniform": UniformRange}
    if name not in rules:
        raise ValueError(f"unknown coefficient rule {text!r}")
    return rules[name](*vals)


def rule_name(rule):
    if isinstance(rule, Alternating):
        return "alternating"
    if isinstance(rule, Constant):
        return f"constant:{rule.value!r}"
    if isinstance(rule, SubsetConstant):
        return f"subset:{rule.fraction!r}:{rule.value!r}"
    return f"uniform:{rule.low!r}:{rule.high!r}"


@dataclass(frozen=True)
class SimulationSpec:
    n: int
    p: int
    rho: float = 0.0
    rule: object = field(default_factory=Alternating)
    snr: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be >= 1")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if not self.snr > 0:
            raise ValueError("snr must be > 0")


def make_rng(seed):
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def generate_raw(spec):
    """Raw (unstandardized) design, response and true coefficients.

    Rows are equicorrelated Gaussians built from a shared factor,
    ``x_ij = sqrt(rho) z_i + sqrt(1 - rho) e_ij``; the noise scale is
    ``sd(X beta) / snr``.
    """
    rng = make_rng(spec.seed)
    n, p = spec.n, spec.p
    z = rng.standard_normal(n)
    E = rng.standard_normal((n, p))
    X = math.sqrt(spec.rho) * z[:, None] + math.sqrt(1.0 - spec.rho) * E
    beta = spec.rule.coefficients(p, rng)
    signal = X @ beta
    sd = float(np.std(signal, ddof=1)) if n > 1 else 0.0
    k = sd / spec.snr if sd > 0 else 1.0 / spec.snr
    y = signal + k * rng.standard_normal(n)
    return X, y, beta


def generate(spec):
    """Standardized problem and the true coefficient vector."""
    X, y, beta = generate_raw(spec)
    return standardize(X, y), beta


# -- sparsity calibration -------------------------------------------------------


@dataclass(frozen=True)
class SparsityTarget:
    s: float

    def __post_init__(self):
        if not 0.0 <= self.s <= 1.0:
            raise ValueError("s must lie in [0, 1]")

    def count(self, n, p):
        return int(math.floor((1.0 - self.s) * min(n, p) + 0.5))


@dataclass
class Calibration:
    lam: float
    nonzeros: int
    target: int
    solution: np.ndarray

    def __iter__(self):
        # unpacks as (lambda, achieved_nonzeros)
        return iter((self.lam, self.nonzeros))


def _lars_segments(problem):
    """Knots of the lasso path as ``(lam_hi, lam_lo, count, coef_mid)`` tuples."""
    n, p = problem.n, problem.p
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        warnings.simplefilter("ignore", RuntimeWarning)
        alphas, _, coefs = lars_path(
            problem.design, problem.response, Gram=problem.gram, Xy=problem.xty,
            method="lasso", max_iter=max(500, 10 * min(n, p)),
        )
    lams = alphas * n
    out = []
    for k in range(len(lams) - 1):
        hi, lo = lams[k], lams[k + 1]
        if not hi > lo:
            continue
        mid = 0.5 * (coefs[:, k] + coefs[:, k + 1])
        out.append((hi, lo, int(np.count_nonzero(mid)), coefs[:, k], coefs[:, k + 1]))
    return out


def _interp(seg, lam):
    hi, lo, _, c_hi, c_lo = seg
    w = (hi - lam) / (hi - lo)
    return (1 - w) * c_hi + w * c_lo


def calibrate_lambda(problem, target, tol=1e-10, max_steps=200):
    """Find lambda whose certified lasso solution has the target number of nonzeros.

    Candidate intervals come from the LARS knots; the chosen lambda is the
    geometric midpoint of the widest interval with the target count and is
    confirmed by the oracle.  If the knots are unusable, falls back to
    bisection on ``log(lambda)``.  Returns a :class:`Calibration` (which also
    unpacks as ``(lam, nonzeros)``).
    """
    want = target.count(problem.n, problem.p) if isinstance(target, SparsityTarget) else int(target)
    lmax = lambda_max(problem)
    if want == 0 or lmax == 0:
        return Calibration(lmax, 0, want, np.zeros(problem.p))

    def certify(lam, start=None):
        sol = solve_ista(problem, Lasso(lam), tol=tol, start=start)
        return sol, int(np.count_nonzero(sol))

    try:
        segs = _lars_segments(problem)
    except Exception:  # noqa: BLE001 - fall back to bisection on any LARS failure
        segs = []
    # The last LARS knot sits at (numerically) zero, which makes the tail interval
    # look infinitely wide on a log scale although it is the nearly-interpolating,
    # badly conditioned end of the path.  Closed intervals are tried first.
    floor = 1e-9 * lmax

    def rank(seg):
        if seg[1] <= floor:
            return (0, 0.0)
        return (1, math.log(seg[0]) - math.log(seg[1]))

    for seg in sorted((s for s in segs if s[2] == want), key=rank, reverse=True)[:3]:
        lam = math.sqrt(seg[0] * seg[1]) if seg[1] > floor else 0.5 * seg[0]
        sol, cnt = certify(lam, _interp(seg, lam))
        if cnt == want:
            return Calibration(lam, cnt, want, sol)

    # bisection fallback on log(lambda)
    seen = {}
    warm = None

    def count(lam):
        nonlocal warm
        sol, cnt = certify(lam, warm)
        warm = sol
        seen[lam] = (cnt, sol)
        return cnt

    hi = lmax
    lo = lmax * 1e-4
    while count(lo) < want and lo > lmax * 1e-12:
        hi = lo
        lo *= 1e-2
    if seen[lo][0] == want:
        return Calibration(lo, want, want, seen[lo][1])
    for _ in range(max_steps):
        mid = math.sqrt(lo * hi)
        c = count(mid)
        if c == want:
            return Calibration(mid, c, want, seen[mid][1])
        if c > want:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1.0 < 1e-14:
            break
    for off in (-1, 1):  # ties toward the sparser solution
        hits = [lam for lam, (c, _) in seen.items() if c == want + off]
        if hits:
            lam = max(hits)
            return Calibration(lam, want + off, want, seen[lam][1])
    raise Unachievable(f"no lambda reaches {want} +/- 1 nonzeros")
