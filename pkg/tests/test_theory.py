import math

import numpy as np
import pytest

from tkma.core import Operator
from tkma.rng import gaussian_array, rng_new
from tkma.theory import (FAMILIES, Check, VerifyReport, affine_problem, affine_rate_problem,
                         random_orthogonal, spread_rotation, theory_suite, tkma_rate_run,
                         verify_km_acceleration)


def test_scalar_contraction_example():
    # 0.5 x = 0.75 x + 0.25 (-x): a 1/4-averaged map
    T = Operator(lambda x: 0.5 * x, 1, 0.25)
    rep = verify_km_acceleration(T, np.zeros(1), np.ones(1), grid=100)
    assert rep.theta_star == 1.0
    assert rep.psi[-1] == 0.0 and rep.psi[0] == 0.5
    assert rep.ok and rep.theta_star_bound


def test_two_point_grid():
    T = Operator(lambda x: 0.5 * x, 1, 0.25)
    rep = verify_km_acceleration(T, np.zeros(1), np.array([3.0]), grid=2)
    assert rep.psi[-1] <= rep.psi[0]
    with pytest.raises(ValueError):
        verify_km_acceleration(T, np.zeros(1), np.ones(1), grid=1)


def test_affine_five_dim_against_dense_psi():
    rng = np.random.default_rng(0)
    Q = np.linalg.qr(rng.normal(size=(5, 5)))[0]
    N = Q * rng.uniform(-0.6, 0.6, size=5)
    N *= 0.6 / np.linalg.norm(N, 2)
    alpha = 0.3
    T = Operator(lambda x: (1 - alpha) * x + alpha * (N @ x), 5, alpha)
    for _ in range(20):
        x = rng.normal(size=5)
        rep = verify_km_acceleration(T, np.zeros(5), x)
        assert rep.ok
        # independent dense sampling of psi over [0, 2 theta*]
        Tx = T(x)
        th = np.linspace(0, 2 * rep.theta_star, 1000)
        psi = np.linalg.norm(Tx[None] + th[:, None] * (Tx - x)[None], axis=1)
        half = th <= rep.theta_star
        assert np.all(np.diff(psi[half]) < 0)
        assert np.all(psi <= np.linalg.norm(Tx) * (1 + 1e-12))


def test_rejects_non_fixed_point():
    T = Operator(lambda x: 0.5 * x, 1, 0.25)
    with pytest.raises(ValueError):
        verify_km_acceleration(T, np.ones(1), np.array([2.0]))


def test_high_alpha_sign_dichotomy():
    inside = outside = 0
    rng = rng_new(3, 3)
    for i in range(300):
        prob = FAMILIES[i % 3](rng, 4, 0.8)
        x = prob.xhat + gaussian_array(rng, 4)
        if np.linalg.norm(prob.T(x) - x) < 1e-10:
            continue  # inside the reflected ball the map is the identity
        rep = verify_km_acceleration(prob.T, prob.xhat, x)
        assert rep.sign_consistent and rep.within_bound
        inside += rep.inside_ball
        outside += not rep.inside_ball
    assert inside > 0 and outside > 0  # both branches exercised


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_families_are_averaged(family, alpha):
    # ||Tx - Ty||^2 + (1 - a)/a ||(I - T)x - (I - T)y||^2 <= ||x - y||^2
    rng = rng_new(11, 2)
    for _ in range(30):
        prob = family(rng, 5, alpha)
        x, y = 3 * gaussian_array(rng, 5), 3 * gaussian_array(rng, 5)
        Tx, Ty = prob.T(x), prob.T(y)
        lhs = np.sum((Tx - Ty) ** 2) + (1 - alpha) / alpha * np.sum(((x - Tx) - (y - Ty)) ** 2)
        assert lhs <= np.sum((x - y) ** 2) * (1 + 1e-12) + 1e-12
        assert np.linalg.norm(prob.T(prob.xhat) - prob.xhat) <= 1e-12


def test_random_orthogonal():
    Q = random_orthogonal(rng_new(1, 1), 6)
    assert np.allclose(Q.T @ Q, np.eye(6), atol=1e-12)


@pytest.mark.parametrize("d", [6, 7])
def test_spread_rotation_spectrum(d):
    Q = spread_rotation(rng_new(2, 2), d)
    assert np.allclose(Q.T @ Q, np.eye(d), atol=1e-12)
    ang = np.sort(np.abs(np.angle(np.linalg.eigvals(Q))))
    m = d // 2
    expect = np.sort(np.concatenate([np.repeat(np.pi * np.arange(1, m + 1) / m, 2), [np.pi] * (d % 2)]))
    assert np.allclose(ang, expect, atol=1e-6)


def test_suite_passes_on_honest_operators():
    rep = theory_suite(400, seed=5)
    assert rep.passed, rep.format()
    assert all(c.trials > 0 for c in rep.checks.values())


def test_suite_flags_mis_declared_alpha():
    rep = theory_suite(200, seed=5, alphas=(0.3,), build_alpha=0.9)
    assert not rep.passed
    assert rep.check("theta range [1-2a, 1]").violations > 0


def test_suite_zero_trials():
    rep = theory_suite(0)
    assert rep.passed and rep.warnings and not rep.checks


def test_check_counts_nan_as_violation():
    c = Check("x")
    c.record(0.5)
    c.record(float("nan"))
    assert c.violations == 1 and math.isnan(c.worst_margin)


def test_report_merge_and_format():
    a, b = VerifyReport(), VerifyReport()
    a.check("one").record(1.0)
    b.check("one").record(-2.0)
    b.check("two").record(3.0)
    a.merge(b)
    assert a.check("one").trials == 2 and a.violations == 1
    assert "FAIL" in a.format() and "two" in a.format()


def test_rate_run_shapes():
    prob = affine_rate_problem(10, 0.5, seed=1)
    diag = tkma_rate_run(prob.T, prob.xhat + 1.0, 100)
    assert diag.scaled_steps.shape == (100,) and diag.scaled_steps[0] == 0.0
    assert diag.theta_variation[-1] == pytest.approx(np.abs(np.diff(diag.thetas)).sum())
    assert 0.0 <= diag.final_quartile_share() <= 1.0


def test_affine_problem_declared_alpha():
    prob = affine_problem(rng_new(1), 3, 0.9, declared_alpha=0.3)
    assert prob.T.alpha == 0.3
