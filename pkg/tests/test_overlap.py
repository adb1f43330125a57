import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import make_dense_gaussian, make_logistic, make_ridge
from _oracles import (
    finite_diff_jacobian,
    gaussian_forward_blocks,
    gaussian_proposal_kl,
    gaussian_proposal_moments,
)
from hmclab.errors import ConvergenceError
from hmclab.leapfrog import PhaseState, forward_map, momentum_jacobian
from hmclab.overlap import (
    inverse_map,
    kl_between_proposals,
    kl_lemma_bound,
    proposal_log_density,
)
from hmclab.targets import GaussianTarget


def test_inverse_map_trivial_1d():
    t = GaussianTarget.standard(1)
    p = inverse_map(t, np.zeros(1), np.array([0.05]), 1, 0.1)
    assert_allclose(p, [0.5], atol=1e-12)


def test_inverse_map_round_trip(rng):
    for target in (make_ridge(5, 4, seed=71), make_logistic(8, 4, seed=72)):
        K = 3
        eta = 0.25 / (K * math.sqrt(target.smoothness))
        for _ in range(5):
            q0, p = rng.standard_normal((2, 4))
            y = forward_map(target, PhaseState(q0, p), K, eta).final.q
            p_hat = inverse_map(target, q0, y, K, eta, tol=1e-11)
            assert np.linalg.norm(p_hat - p) <= 1e-9


def test_inverse_map_matches_linear_solve(rng):
    t = GaussianTarget.standard(1)
    K, eta = 2, 0.1
    a_qq, a_qp, _, _ = gaussian_forward_blocks(np.array([[1.0]]), eta, K)
    for q0, y in ((0.0, 0.3), (1.2, -0.4), (-0.5, 0.0)):
        expected = (y - a_qq[0, 0] * q0) / a_qp[0, 0]
        got = inverse_map(t, np.array([q0]), np.array([y]), K, eta)
        assert_allclose(got, [expected], atol=1e-10)


def test_inverse_map_no_convergence():
    target = make_logistic(8, 3, seed=73)
    with pytest.raises(ConvergenceError):
        inverse_map(target, np.zeros(3), np.full(3, 2.0), 3, 0.05, tol=1e-14, max_iter=1)


def test_proposal_log_density_hand_value():
    t = GaussianTarget.standard(1)
    value = proposal_log_density(t, np.zeros(1), np.array([0.05]), 1, 0.1)
    expected = -0.9189385332046727 - 0.125 + math.log(10.0)
    assert_allclose(value, expected, atol=1e-9)
    assert_allclose(value, 1.2586466, atol=1e-7)


def test_proposal_density_integrates_to_one():
    t = GaussianTarget.standard(1)
    K, eta = 2, 0.15
    q0 = np.array([0.4])
    ys = np.linspace(q0[0] - 6 * K * eta, q0[0] + 6 * K * eta, 4001)[:, None]
    # inverse_map and the log-density evaluate batched over rows of y
    log_density = proposal_log_density(t, q0, ys, K, eta)
    mass = np.trapezoid(np.exp(log_density), ys[:, 0])
    assert abs(mass - 1.0) <= 1e-4


def test_proposal_density_matches_gaussian_closed_form(rng):
    precision = make_dense_gaussian(2, seed=74).precision
    t = GaussianTarget(precision)
    K, eta = 3, 0.1
    q0 = rng.standard_normal(2)
    mean, cov = gaussian_proposal_moments(precision, q0, eta, K)
    cov_inv = np.linalg.inv(cov)
    _, logdet = np.linalg.slogdet(cov)
    for _ in range(5):
        y = mean + 0.5 * rng.standard_normal(2)
        expected = -0.5 * (y - mean) @ cov_inv @ (y - mean) - 0.5 * logdet - math.log(2 * math.pi)
        got = proposal_log_density(t, q0, y, K, eta)
        assert abs(got - expected) <= 1e-8


def test_kl_zero_at_equal_starts(rng):
    target = make_ridge(4, 3, seed=75)
    est, se = kl_between_proposals(target, np.ones(3), np.ones(3), 2, 0.08, 500, rng)
    assert est == 0.0 and se == 0.0


def test_kl_matches_gaussian_closed_form_1d():
    t = GaussianTarget.standard(1)
    gen = np.random.default_rng(42)
    est, se = kl_between_proposals(t, np.zeros(1), np.array([0.01]), 1, 0.1, 100_000, gen)
    closed = 0.5 * (0.995 * 0.01) ** 2 / 0.01
    assert abs(est - closed) <= 3.0 * se
    assert est >= -3.0 * se


def test_kl_symmetry_to_first_order():
    precision = np.diag([1.0, 2.0])
    t = GaussianTarget(precision)
    K, eta = 2, 0.1
    q0 = np.zeros(2)
    q1 = np.array([0.004, -0.003])
    closed = gaussian_proposal_kl(precision, q0, q1, eta, K)
    fwd, se_f = kl_between_proposals(t, q0, q1, K, eta, 50_000, np.random.default_rng(7))
    rev, se_r = kl_between_proposals(t, q1, q0, K, eta, 50_000, np.random.default_rng(7))
    assert abs(fwd - closed) <= 3 * se_f
    assert abs(rev - closed) <= 3 * se_r


def test_kl_lemma_bound_on_hessian_lipschitz_target():
    # separation K eta / 64 keeps the KL below 1/64 + K^6 eta^6 gamma^2 L^3 / 4
    target = make_ridge(5, 3, seed=76)
    K = 2
    eta = 0.25 / (K * math.sqrt(target.smoothness))
    sep = K * eta / 64.0
    gen = np.random.default_rng(11)
    direction = gen.standard_normal(3)
    direction /= np.linalg.norm(direction)
    q0 = np.zeros(3)
    est, se = kl_between_proposals(target, q0, q0 + sep * direction, K, eta, 50_000, gen)
    bound = kl_lemma_bound(K, eta, target.gamma, target.smoothness)
    assert est <= bound + 3.0 * se


def test_jacobian_inverse_identity(rng):
    # D2F at (q, G(q, y)) is the matrix inverse of the FD derivative of G in y
    target = make_ridge(4, 3, seed=77)
    K = 3
    eta = 0.25 / (K * math.sqrt(target.smoothness))
    q0, p = rng.standard_normal((2, 3))
    y = forward_map(target, PhaseState(q0, p), K, eta).final.q

    def g_of_y(yy):
        return inverse_map(target, q0, yy, K, eta, tol=1e-12)

    fd_d2g = finite_diff_jacobian(g_of_y, y, h=1e-5)
    jac_f = momentum_jacobian(target, q0, g_of_y(y), K, eta)
    assert np.abs(jac_f @ fd_d2g - np.eye(3)).max() <= 1e-5


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_d2g_eigenvalue_range(seed):
    gen = np.random.default_rng(100 + seed)
    target = make_dense_gaussian(4, seed=80 + seed) if seed % 2 else make_ridge(5, 4, seed=81 + seed)
    K = int(gen.integers(1, 5))
    eta = 0.25 / (K * math.sqrt(target.smoothness))
    q0, p0 = gen.standard_normal((2, 4))
    jac = momentum_jacobian(target, q0, p0, K, eta)
    eigs = np.linalg.eigvals(np.linalg.inv(jac))
    lo, hi = 16.0 / (17.0 * K * eta), 16.0 / (15.0 * K * eta)
    assert (np.abs(eigs) >= lo * (1 - 1e-12)).all()
    assert (np.abs(eigs) <= hi * (1 + 1e-12)).all()


def test_pinsker_tv_between_proposal_samples():
    # empirical TV of the 1D proposals is below sqrt(KL/2) + histogram tolerance
    t = GaussianTarget.standard(1)
    K, eta = 1, 0.1
    q0, q1 = np.zeros(1), np.array([0.02])
    gen = np.random.default_rng(5)
    est, _ = kl_between_proposals(t, q0, q1, K, eta, 50_000, gen)
    mean0, cov = gaussian_proposal_moments(np.array([[1.0]]), q0, eta, K)
    mean1, _ = gaussian_proposal_moments(np.array([[1.0]]), q1, eta, K)
    scale = math.sqrt(cov[0, 0])
    n = 200_000
    draws0 = mean0[0] + scale * gen.standard_normal(n)
    draws1 = mean1[0] + scale * gen.standard_normal(n)
    # TV between the two sample sets via a common histogram
    edges = np.linspace(-6 * scale, 6 * scale, 201)
    h0 = np.histogram(np.clip(draws0, edges[0], edges[-1]), bins=edges)[0] / n
    h1 = np.histogram(np.clip(draws1, edges[0], edges[-1]), bins=edges)[0] / n
    tv_emp = 0.5 * np.abs(h0 - h1).sum()
    assert tv_emp <= math.sqrt(max(est, 0.0) / 2.0) + 0.05


def test_common_random_numbers_reduce_variance():
    t = GaussianTarget.standard(2)
    est, se = kl_between_proposals(
        t, np.zeros(2), np.array([0.01, 0.0]), 2, 0.1, 20_000, np.random.default_rng(9)
    )
    closed = gaussian_proposal_kl(np.eye(2), np.zeros(2), np.array([0.01, 0.0]), 0.1, 2)
    # the integrand difference is tiny, so even modest n gives tight errors
    assert se <= 5e-4
    assert abs(est - closed) <= 3 * se
