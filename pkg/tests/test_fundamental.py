import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaybound.dde_core import ToleranceConfig
from delaybound.errors import NonPositiveNorm, SingularFundamental, WindowMismatch
from delaybound.fundamental import (
    DiagonalMatrix,
    ScalarMatrix,
    compute_fundamental,
    induced_norm2,
    log_norm_rate,
    sup_over_window,
)

from oracles import expm_taylor, lambda_a_integral, largest_singular_value

TIGHT = ToleranceConfig(rtol=1e-11, atol=1e-13)


def lam_a(t):
    return -3.0 + 0.1 * math.sin(5.0 * t)


@pytest.mark.parametrize(
    "M, expected",
    [(np.eye(3), 1.0), (np.diag([2.0, -3.0]), 3.0), (np.array([[0.0, 1.0], [-1.0, 0.0]]), 1.0)],
)
def test_induced_norm_examples(M, expected):
    assert induced_norm2(M) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 16), st.integers(0, 10_000))
def test_induced_norm_against_power_iteration(n, seed):
    M = np.random.default_rng(seed).normal(size=(n, n))
    assert induced_norm2(M) == pytest.approx(largest_singular_value(M), rel=1e-10)


def test_scalar_isotropic_flow():
    fd = compute_fundamental(ScalarMatrix(lam_a, 2), 0.0, 20.0)
    for t in np.linspace(0, 20, 37):
        assert fd.p(t) == lam_a(t)
        assert fd.c(t) == 1.0
    assert np.allclose(np.log(fd.w_norm), [lambda_a_integral(t) for t in fd.grid], rtol=0, atol=1e-12)


def test_zero_matrix_is_identity_flow():
    fd = compute_fundamental(lambda t: np.zeros((2, 2)), 0.0, 5.0)
    assert np.allclose(fd.w_norm, 1.0) and np.allclose(fd.c_samples, 1.0) and np.allclose(fd.p_samples, 0.0)


def test_rotation_preserves_norm():
    R = np.array([[0.0, 1.0], [-1.0, 0.0]])
    fd = compute_fundamental(lambda t: R, 0.0, 10.0)
    assert np.max(np.abs(fd.c_samples - 1.0)) < 1e-8
    assert np.max(np.abs(fd.p_samples)) < 1e-6


def test_constant_matrix_against_expm_oracle():
    A = np.array([[-0.4, 1.3], [-0.8, 0.2]])
    fd = compute_fundamental(lambda t: A, 0.0, 4.0, tol=TIGHT)
    for j in range(0, fd.grid.size, 250):
        W = expm_taylor(fd.grid[j] * A)
        assert fd.w_norm[j] == pytest.approx(induced_norm2(W), rel=1e-8)
        assert fd.w_inv_norm[j] == pytest.approx(induced_norm2(np.linalg.inv(W)), rel=1e-8)


def test_invariants_on_generic_flow():
    A = lambda t: np.array([[-1.0 + 0.3 * math.sin(t), 1.0], [-1.0 - 0.1 * math.sin(3.14 * t), -1.0]])
    fd = compute_fundamental(A, 0.0, 20.0)
    assert fd.w_norm[0] == 1.0 and fd.c_samples[0] == pytest.approx(1.0)
    assert np.all(fd.c_samples >= 1.0 - 1e-12)
    assert np.all(fd.w_norm > 0) and np.all(np.isfinite(fd.w_inv_norm))
    rec = fd.reconstruct_w_norm()
    assert np.max(np.abs(rec / fd.w_norm - 1.0)) < 1e-4


def test_diagonal_closed_form():
    lams = [lambda t: -1.0, lambda t: -2.0 + math.sin(t)]
    fd = compute_fundamental(DiagonalMatrix(lams), 0.0, 6.0)
    ref = compute_fundamental(lambda t: np.diag([f(t) for f in lams]), 0.0, 6.0, tol=TIGHT)
    assert np.allclose(fd.w_norm, ref.w_norm, rtol=1e-8)
    assert np.allclose(fd.c_samples, ref.c_samples, rtol=1e-8)


def test_log_norm_rate_examples():
    grid = np.linspace(0, 5, 1001)
    assert np.allclose(log_norm_rate(np.exp(-3 * grid), grid), -3.0, atol=1e-6)
    assert np.allclose(log_norm_rate(np.ones_like(grid), grid), 0.0)
    w = np.exp([lambda_a_integral(t) for t in grid])
    p = log_norm_rate(w, grid)
    assert np.max(np.abs(p - [lam_a(t) for t in grid])) < 2e-3


def test_log_norm_rate_rejects_nonpositive():
    with pytest.raises(NonPositiveNorm):
        log_norm_rate(np.array([1.0, 0.0, 1.0]), np.array([0.0, 1.0, 2.0]))


def test_log_norm_rate_warns_on_drift():
    grid = np.linspace(0, 1, 5)
    w = np.array([1.0, 1.0, 1.0, 100.0, 100.0])
    with pytest.warns(RuntimeWarning):
        log_norm_rate(w, grid)


def test_singular_fundamental():
    with pytest.raises(SingularFundamental):
        compute_fundamental(lambda t: np.array([[-400.0, 0.0], [0.0, 0.0]]), 0.0, 3.0)


def test_window_checks():
    fd = compute_fundamental(ScalarMatrix(lam_a, 2), 0.0, 5.0)
    assert fd.covers(0.0, 5.0) and not fd.covers(0.0, 6.0)
    with pytest.raises(WindowMismatch):
        fd.require_window(1.0, 5.0)


def test_sup_over_window_refines():
    assert sup_over_window(lam_a, 0.0, 20.0, samples=50) == pytest.approx(-2.9, abs=1e-10)
    assert fd_sups() == pytest.approx((-2.9, 1.0), abs=1e-9)


def fd_sups():
    fd = compute_fundamental(ScalarMatrix(lam_a, 2), 0.0, 20.0)
    return fd.p_hat(), fd.c_hat()


def test_reconstruction_across_singular_value_crossing():
    # A = lam I + A1 has a singular-value crossing near t = 7.38, where the
    # finite-difference rate is first order; a finer grid restores accuracy
    from delaybound.scenarios import Section6Scenario
    cfg = Section6Scenario()
    A = lambda t: cfg.lam(t) * np.eye(2) + cfg.A1(t)
    coarse = compute_fundamental(A, 0.0, 20.0)
    fine = compute_fundamental(A, 0.0, 20.0, grid_step=0.001)
    err = lambda fd: np.max(np.abs(fd.reconstruct_w_norm() / fd.w_norm - 1.0))
    assert err(fine) < 1e-4 < err(coarse)
