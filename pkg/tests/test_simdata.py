import math

import numpy as np
import pytest

from sloglab.baselines import lambda_max, solve_ista
from sloglab.core import Lasso, kkt_check, standardize
from sloglab.simdata import (
    Alternating,
    Constant,
    SimulationSpec,
    SparsityTarget,
    SubsetConstant,
    UniformRange,
    calibrate_lambda,
    generate,
    generate_raw,
    make_rng,
    parse_rule,
    rule_name,
)


def test_alternating_rule_values():
    beta = Alternating().coefficients(3, None)
    assert np.allclose(beta, [-1.0, math.exp(-0.1), -math.exp(-0.2)])
    assert np.allclose(beta, [-1.0, 0.9048, -0.8187], atol=1e-4)


def test_other_rules():
    rng = make_rng(0)
    assert np.all(Constant(0.1).coefficients(5, rng) == 0.1)
    sub = SubsetConstant(0.2, 2.0).coefficients(10, rng)
    assert sub.tolist() == [2.0, 2.0] + [0.0] * 8
    u = UniformRange(-1, 1).coefficients(100, rng)
    assert np.all((u >= -1) & (u < 1))


@pytest.mark.parametrize("text", ["alternating", "constant:0.1", "subset:0.25:1.5", "uniform:-2:3"])
def test_rule_round_trip(text):
    rule = parse_rule(text)
    assert parse_rule(rule_name(rule)) == rule


def test_unknown_rule():
    with pytest.raises(ValueError):
        parse_rule("gamma:1")


def test_spec_validation():
    with pytest.raises(ValueError):
        SimulationSpec(10, 3, rho=1.0)
    with pytest.raises(ValueError):
        SimulationSpec(0, 3)
    with pytest.raises(ValueError):
        SimulationSpec(10, 3, snr=0)


def test_generation_is_deterministic():
    spec = SimulationSpec(30, 10, 0.4, seed=11)
    a, b = generate_raw(spec), generate_raw(spec)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    pa, _ = generate(spec)
    pb, _ = generate(spec)
    assert np.array_equal(pa.design, pb.design)
    assert np.array_equal(pa.response, pb.response)


def test_independent_columns_when_rho_zero():
    n = 400
    X, _, _ = generate_raw(SimulationSpec(n, 6, 0.0, seed=2))
    C = np.corrcoef(X, rowvar=False)
    off = C[~np.eye(6, dtype=bool)]
    assert np.all(np.abs(off) < 3 / math.sqrt(n))


def test_equicorrelation_large_n():
    n = 5000
    X, _, _ = generate_raw(SimulationSpec(n, 10, 0.6, seed=3))
    C = np.corrcoef(X, rowvar=False)
    off = C[~np.eye(10, dtype=bool)]
    assert np.all(np.abs(off - 0.6) < 3 / math.sqrt(n))


def test_noise_scale_matches_snr():
    spec = SimulationSpec(2000, 5, 0.0, snr=3.0, seed=4)
    X, y, beta = generate_raw(spec)
    signal = X @ beta
    noise = y - signal
    assert np.std(signal, ddof=1) / np.std(noise, ddof=1) == pytest.approx(3.0, rel=0.05)


def test_sparsity_count():
    assert SparsityTarget(0.05).count(100, 300) == 95
    assert SparsityTarget(1.0).count(100, 300) == 0
    assert SparsityTarget(0.0).count(50, 3) == 3
    with pytest.raises(ValueError):
        SparsityTarget(1.5)


def test_calibrate_s_one_returns_lambda_max():
    prob, _ = generate(SimulationSpec(30, 20, 0.3, seed=5))
    lam, nnz = calibrate_lambda(prob, SparsityTarget(1.0))
    assert lam == lambda_max(prob)
    assert nnz == 0


def test_calibrate_single_column():
    rng = np.random.default_rng(6)
    x = rng.standard_normal(25)
    prob = standardize(x[:, None], 2 * x + rng.standard_normal(25))
    cal = calibrate_lambda(prob, SparsityTarget(0.0))
    beta_hat = prob.xty[0] / prob.n
    assert cal.nonzeros == 1
    assert 0 < cal.lam < prob.n * abs(beta_hat)


def test_calibrate_desk_scale_cell():
    prob, _ = generate(SimulationSpec(100, 300, 0.95, seed=7))
    cal = calibrate_lambda(prob, SparsityTarget(0.05))
    assert abs(cal.nonzeros - 95) <= 1
    assert kkt_check(prob, Lasso(cal.lam), cal.solution, tol=1e-10).optimal


def test_count_is_monotone_in_lambda():
    prob, _ = generate(SimulationSpec(40, 30, 0.5, seed=8))
    lams = np.geomspace(lambda_max(prob), 1e-3 * lambda_max(prob), 12)
    counts = [np.count_nonzero(solve_ista(prob, Lasso(lam))) for lam in lams]
    assert all(a <= b for a, b in zip(counts, counts[1:]))
