"""Problem representation, lasso-family objectives and KKT diagnostics.

Conventions used throughout the package:

* the response is centered and every design column is centered and scaled
  so that ``sum_i X_ij**2 == n``;
* the lasso objective is ``||y - X b||^2 + 2 * lam * ||b||_1`` (no 1/2n
  factor), so stationarity reads ``X_j^T (y - X b) = lam * sign(b_j)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class SlogError(Exception):
    """Base class for errors raised by this package."""


class DimensionMismatch(SlogError, ValueError):
    pass


class ConstantColumn(SlogError, ValueError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column} has zero variance")


class InvalidPenalty(SlogError, ValueError):
    pass


class SingularSystem(SlogError, np.linalg.LinAlgError):
    pass


class NotConverged(SlogError, RuntimeError):
    """Raised when a solver hits its iteration cap; ``result`` holds the partial run."""

    def __init__(self, result, message=None):
        self.result = result
        super().__init__(message or f"not converged after {result.iterations} iterations")


@dataclass(frozen=True)
class Standardization:
    """Undo information: ``X_std = (X_raw - x_mean) * x_scale``, ``y_std = y_raw - y_mean``."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float

    def to_original(self, coef):
        """Map standardized-scale coefficients to ``(intercept, coef)`` on the raw scale."""
        raw = np.asarray(coef, dtype=float) * self.x_scale
        return float(self.y_mean - self.x_mean @ raw), raw

    def predict(self, X_raw, coef):
        intercept, raw = self.to_original(coef)
        return intercept + np.asarray(X_raw, dtype=float) @ raw

    def raw_design(self, X_std):
        return np.asarray(X_std) / self.x_scale + self.x_mean


@dataclass(frozen=True, eq=False)
class RegressionProblem:
    design: np.ndarray
    response: np.ndarray
    standardization: Standardization | None = None

    def __post_init__(self):
        X = np.array(self.design, dtype=float, order="C")
        y = np.array(self.response, dtype=float, order="C")
        if X.ndim != 2 or y.ndim != 1:
            raise DimensionMismatch("design must be 2-d and response 1-d")
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"response has length {y.shape[0]}, design has {X.shape[0]} rows")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionMismatch("need n >= 1 and p >= 1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "response", y)

    @property
    def n(self):
        return self.design.shape[0]

    @property
    def p(self):
        return self.design.shape[1]

    @cached_property
    def gram(self):
        G = self.design.T @ self.design
        G.setflags(write=False)
        return G

    @cached_property
    def xty(self):
        v = self.design.T @ self.response
        v.setflags(write=False)
        return v

    def subproblem(self, columns):
        """Problem restricted to a subset of columns (same response)."""
        columns = np.asarray(columns, dtype=int)
        std = None
        if self.standardization is not None:
            s = self.standardization
            std = Standardization(s.x_mean[columns], s.x_scale[columns], s.y_mean)
        return RegressionProblem(self.design[:, columns], self.response, std)


def standardize(raw_design, raw_response):
    """Center the response; center each column and scale it to ``sum x**2 == n``."""
    X = np.array(raw_design, dtype=float, copy=True)
    y = np.array(raw_response, dtype=float, copy=True)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or y.ndim != 1:
        raise DimensionMismatch("design must be 2-d and response 1-d")
    n, p = X.shape
    if y.shape[0] != n:
        raise DimensionMismatch(f"response has length {y.shape[0]}, design has {n} rows")
    if n < 2:
        raise DimensionMismatch("need at least two observations")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("design and response must be finite")

    x_mean = X.mean(axis=0)
    Xc = X - x_mean
    ss = np.einsum("ij,ij->j", Xc, Xc)
    for j in range(p):
        # relative test: rounding leaves ~eps-size residue in a constant column
        if ss[j] <= (1e-24 * n) * max(1.0, x_mean[j] ** 2) or np.ptp(X[:, j]) == 0.0:
            raise ConstantColumn(j)
    scale = np.sqrt(n / ss)
    y_mean = float(y.mean())
    Xs = Xc * scale
    std = Standardization(x_mean, scale, y_mean)
    return RegressionProblem(Xs, y - y_mean, std)


# -- penalties -------------------------------------------------------------


@dataclass(frozen=True)
class Lasso:
    lam: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InvalidPenalty("lambda must be finite and > 0")


@dataclass(frozen=True)
class ElasticNet:
    lam1: float
    lam2: float

    def __post_init__(self):
        if not (np.isfinite(self.lam1) and self.lam1 > 0):
            raise InvalidPenalty("lambda1 must be finite and > 0")
        if not (np.isfinite(self.lam2) and self.lam2 >= 0):
            raise InvalidPenalty("lambda2 must be finite and >= 0")


@dataclass(frozen=True, eq=False)
class GroupLasso:
    lam: float
    groups: tuple = field(default=())

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InvalidPenalty("lambda must be finite and > 0")
        groups = tuple(np.array(sorted(set(int(i) for i in g)), dtype=int) for g in self.groups)
        if not groups or any(len(g) == 0 for g in groups):
            raise InvalidPenalty("groups must be nonempty")
        object.__setattr__(self, "groups", groups)

    def validate(self, p):
        allidx = np.concatenate(self.groups)
        if len(allidx) != p or not np.array_equal(np.sort(allidx), np.arange(p)):
            raise InvalidPenalty("groups must partition {0..p-1} exactly once")

    @classmethod
    def from_labels(cls, lam, labels):
        labels = np.asarray(labels)
        return cls(lam, tuple(np.flatnonzero(labels == g) for g in dict.fromkeys(labels.tolist())))


PenaltySpec = Lasso | ElasticNet | GroupLasso


def _check_b(problem, b):
    b = np.asarray(b, dtype=float)
    if b.shape != (problem.p,):
        raise DimensionMismatch(f"coefficient vector has shape {b.shape}, expected ({problem.p},)")
    return b


def group_norms(b, groups):
    return np.array([np.linalg.norm(b[g]) for g in groups])


def objective(problem, penalty, b):
    """Minimized-form objective value at ``b``."""
    b = _check_b(problem, b)
    r = problem.response - problem.design @ b
    rss = float(r @ r)
    if isinstance(penalty, Lasso):
        return rss + 2.0 * penalty.lam * float(np.abs(b).sum())
    if isinstance(penalty, ElasticNet):
        return rss + 2.0 * penalty.lam1 * float(np.abs(b).sum()) + penalty.lam2 * float(b @ b)
    if isinstance(penalty, GroupLasso):
        penalty.validate(problem.p)
        return rss + 2.0 * penalty.lam * float(group_norms(b, penalty.groups).sum())
    raise InvalidPenalty(f"unknown penalty {penalty!r}")


@dataclass(frozen=True)
class KKTReport:
    residuals: np.ndarray
    max_violation: float
    active_set: np.ndarray
    tol: float

    @property
    def optimal(self):
        return self.max_violation <= self.tol


def kkt_check(problem, penalty, b, tol=1e-6):
    """Stationarity residuals of the subgradient condition at ``b``.

    For lasso/elastic net there is one residual per coordinate, for group
    lasso one per group (in the order of ``penalty.groups``).
    """
    b = _check_b(problem, b)
    if not np.all(np.isfinite(b)):
        raise ValueError("coefficients must be finite")
    grad = problem.xty - problem.gram @ b  # X^T (y - X b)
    if isinstance(penalty, (Lasso, ElasticNet)):
        if isinstance(penalty, Lasso):
            lam = penalty.lam
        else:
            lam = penalty.lam1
            grad = grad - penalty.lam2 * b
        active = b != 0
        res = np.where(
            active,
            np.abs(grad - lam * np.sign(b)),
            np.maximum(0.0, np.abs(grad) - lam),
        )
    elif isinstance(penalty, GroupLasso):
        penalty.validate(problem.p)
        lam = penalty.lam
        res = np.empty(len(penalty.groups))
        for m, g in enumerate(penalty.groups):
            nrm = np.linalg.norm(b[g])
            if nrm > 0:
                res[m] = np.linalg.norm(grad[g] - lam * b[g] / nrm)
            else:
                res[m] = max(0.0, np.linalg.norm(grad[g]) - lam)
    else:
        raise InvalidPenalty(f"unknown penalty {penalty!r}")
    return KKTReport(res, float(res.max(initial=0.0)), np.flatnonzero(b), tol)


def soft_threshold(a, c):
    """``sign(a) * max(|a| - c, 0)``; works elementwise on arrays."""
    if np.any(np.asarray(c) < 0):
        raise ValueError("threshold must be >= 0")
    out = np.sign(a) * np.maximum(np.abs(a) - c, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def relative_distance(a, b):
    """``||a - b|| / ||b||`` with the absolute norm when ``b`` is zero."""
    nb = np.linalg.norm(b)
    d = np.linalg.norm(np.asarray(a) - np.asarray(b))
    return float(d / nb) if nb > 1e-300 else float(d)
