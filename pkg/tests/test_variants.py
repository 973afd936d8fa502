import math

import numpy as np
import pytest

from sloglab.baselines import lambda_max, solve_ista
from sloglab.core import ElasticNet, GroupLasso, Lasso, RegressionProblem, kkt_check, relative_distance, standardize
from sloglab.simdata import make_rng
from sloglab.slog import SolverConfig, solve_slog
from sloglab.variants import (
    AnnealSchedule,
    BlockPartition,
    sample_inverse_gaussian,
    solve_aslog,
    solve_enet_slog,
    solve_group_slog,
    solve_hybrid,
)

TIGHT = SolverConfig(step_tol=1e-14, max_iter=200_000)


def problem(seed=0, n=40, p=12, rho=0.4):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n)
    X = math.sqrt(rho) * z[:, None] + math.sqrt(1 - rho) * rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:4] = [1.5, -1.0, 0.7, 0.3]
    return standardize(X, X @ beta + rng.standard_normal(n))


def orthogonal_problem(n=20, p=6, seed=0):
    """Centered design with orthogonal columns scaled to sum x^2 = n."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, p))
    A -= A.mean(axis=0)
    Q, _ = np.linalg.qr(A)
    X = Q * math.sqrt(n)
    y = rng.standard_normal(n)
    return RegressionProblem(X, y - y.mean())


def test_enet_with_zero_ridge_is_slog():
    prob = problem(1)
    lam = 0.2 * lambda_max(prob)
    a = solve_slog(prob, lam)
    b = solve_enet_slog(prob, lam, 0.0)
    assert relative_distance(b.coefficients, a.coefficients) <= 1e-10


def test_enet_orthogonal_closed_form():
    prob = orthogonal_problem()
    lam1, lam2 = 3.0, 5.0
    n = prob.n
    beta_hat = prob.xty / n
    expected = np.sign(beta_hat) * np.maximum(np.abs(beta_hat) - lam1 / n, 0) * n / (n + lam2)
    res = solve_enet_slog(prob, lam1, lam2, TIGHT)
    assert np.allclose(res.coefficients, expected, atol=1e-8)


def test_enet_matches_oracle_and_kkt():
    prob = problem(2)
    lam1, lam2 = 0.2 * lambda_max(prob), 4.0
    ref = solve_ista(prob, ElasticNet(lam1, lam2), tol=1e-11)
    res = solve_enet_slog(prob, lam1, lam2, TIGHT)
    assert relative_distance(res.coefficients, ref) < 1e-6
    assert kkt_check(prob, ElasticNet(lam1, lam2), res.coefficients, tol=1e-6).optimal


def test_group_singletons_are_lasso():
    prob = problem(3)
    lam = 0.2 * lambda_max(prob)
    a = solve_slog(prob, lam)
    g = solve_group_slog(prob, lam, [[j] for j in range(prob.p)])
    assert relative_distance(g.coefficients, a.coefficients) <= 1e-8


def test_single_group_orthogonal_closed_form():
    prob = orthogonal_problem(seed=4)
    n = prob.n
    z = prob.xty
    lam = 0.5 * np.linalg.norm(z)
    # X^T X = n I, so the group prox gives b = z (1 - lam / ||z||) / n
    expected = z * (1 - lam / np.linalg.norm(z)) / n
    res = solve_group_slog(prob, lam, [list(range(prob.p))], TIGHT)
    assert np.allclose(res.coefficients, expected, atol=1e-9)


def test_group_matches_oracle_and_is_monotone():
    prob = problem(5, p=12)
    pen = GroupLasso(0.4 * lambda_max(prob), ([0, 1, 2, 3], [4, 5, 6, 7], [8, 9, 10, 11]))
    ref = solve_ista(prob, pen, tol=1e-11)
    res = solve_group_slog(prob, pen.lam, pen, TIGHT)
    assert relative_distance(res.coefficients, ref) < 1e-6
    assert kkt_check(prob, pen, res.coefficients, tol=1e-6).optimal
    obj = np.array(res.trace.objective)
    assert np.all(np.diff(obj) <= 1e-9 * np.abs(obj[:-1]))


def test_group_deactivation_is_whole_group():
    prob = problem(6, p=12)
    lam = 0.9 * lambda_max(prob)
    res = solve_group_slog(prob, lam, [list(range(0, 6)), list(range(6, 12))], TIGHT)
    for g in (range(0, 6), range(6, 12)):
        block = res.coefficients[list(g)]
        assert np.all(block == 0) or np.all(block != 0)


def test_inverse_gaussian_moments():
    rng = make_rng(1)
    mu, shape, m = 2.0, 1e6, 10**6
    x = sample_inverse_gaussian(rng, mu, shape, m)
    var = mu**3 / shape
    assert abs(x.mean() - mu) <= 3 * math.sqrt(var / m)
    se_var = var * math.sqrt((2 + 15 * mu / shape) / m)
    assert abs(x.var() - var) <= 3 * se_var


def test_inverse_gaussian_stays_positive_when_mean_is_huge():
    x = sample_inverse_gaussian(make_rng(2), 1e13, 1e10, 10000)
    assert np.all(x > 0) and np.all(np.isfinite(x))


def test_aslog_degenerate_schedule_is_slog():
    prob = problem(7)
    lam = 0.2 * lambda_max(prob)
    a = solve_slog(prob, lam)
    b = solve_aslog(prob, lam, AnnealSchedule(sigma2_init=0.0))
    assert np.array_equal(a.coefficients, b.coefficients)


def test_aslog_is_reproducible_and_close_to_slog():
    prob = problem(8)
    lam = 0.2 * lambda_max(prob)
    cfg = SolverConfig(step_tol=1e-8)
    sched = AnnealSchedule(sigma2_init=1e-10, seed=3)
    a = solve_aslog(prob, lam, sched, cfg)
    b = solve_aslog(prob, lam, sched, cfg)
    assert np.array_equal(a.coefficients, b.coefficients)
    ref = solve_slog(prob, lam, cfg).coefficients
    assert relative_distance(a.coefficients, ref) < 1e-4


def test_anneal_schedule_validation():
    assert AnnealSchedule(1e-7, 0.5).sigma2(2) == pytest.approx(2.5e-8)
    with pytest.raises(ValueError):
        AnnealSchedule(decay=1.0)


def test_partition_validation():
    with pytest.raises(ValueError):
        BlockPartition([[0, 1], []])
    with pytest.raises(ValueError):
        BlockPartition([[0, 1]], ["QR"])
    with pytest.raises(Exception):
        BlockPartition([[0, 1], [1, 2]]).validate(3)


def test_hybrid_single_block_is_slog():
    prob = problem(9)
    lam = 0.2 * lambda_max(prob)
    a = solve_slog(prob, lam)
    h = solve_hybrid(prob, lam, BlockPartition([range(prob.p)]))
    assert np.array_equal(a.coefficients, h.coefficients)


def test_hybrid_orthogonal_blocks_concatenate():
    prob = orthogonal_problem(n=30, p=8, seed=10)
    lam = 0.3 * lambda_max(prob)
    h = solve_hybrid(prob, lam, BlockPartition([range(4), range(4, 8)], ["SLOG", "CD"]), TIGHT)
    full = solve_slog(prob, lam, TIGHT)
    assert h.reason == "blocks"
    assert relative_distance(h.coefficients, full.coefficients) < 1e-8


def test_hybrid_correlated_blocks_pass_kkt():
    prob = problem(11, p=12, rho=0.2)
    lam = 0.3 * lambda_max(prob)
    h = solve_hybrid(prob, lam, BlockPartition([range(6), range(6, 12)], ["CD", "SLOG"]), TIGHT)
    assert kkt_check(prob, Lasso(lam), h.coefficients, tol=1e-6).optimal
