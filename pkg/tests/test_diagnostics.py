import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fbsde_picard import IterationConfig, RegressionBasis, bmo2, estimate_norms, make_grid, make_problem, phi, phi_bound_check, residual_check, run
from fbsde_picard.diagnostics import bmo_ceiling, h_norm, phi_prime, s_norm, sup_norm


@pytest.mark.parametrize("c", [0.0, -1.5, 2.0])
def test_constant_process_norms(c):
    grid = make_grid(2.0, 8)
    V = np.full((30, 9, 1), c)
    rep = estimate_norms(V, None, grid, (2, 4, 8))
    assert rep.sup == abs(c)
    for p in (2, 4, 8):
        assert rep.S[p] == pytest.approx(abs(c), rel=1e-14)
        assert rep.H[p] == pytest.approx(abs(c) * math.sqrt(2.0), rel=1e-14)


def test_empty_process_rejected():
    with pytest.raises(ValueError):
        sup_norm(np.zeros((0, 3, 1)))


def test_bmo_of_zero_is_exactly_zero():
    cond = np.random.default_rng(0).normal(size=(100, 11, 1))
    assert bmo2(np.zeros((100, 10, 1, 1)), 0.1) == 0.0
    assert bmo2(np.zeros((100, 10, 1, 1)), 0.1, cond, RegressionBasis(3, 4)) == 0.0


def test_bmo_of_unit_z_is_horizon():
    cond = np.random.default_rng(0).normal(size=(100, 11, 1))
    Z = np.ones((100, 10, 1, 1))
    assert bmo2(Z, 0.1) == pytest.approx(1.0, rel=1e-12)
    assert bmo2(Z, 0.1, cond) == pytest.approx(1.0, rel=1e-9)


def test_phi_values():
    mpmath.mp.dps = 40
    assert phi(1.0, 0.5) == pytest.approx(float(mpmath.e - 2), rel=1e-15)
    for C in (0.1, 1.0, 7.0):
        assert phi(0.0, C) == 0.0
    # expm1 keeps the tiny-argument regime accurate: phi(x) ~ x^2 / 2
    assert phi(1e-9, 1.0) == pytest.approx(5e-19, rel=1e-6)
    # phi'' - 2C |phi'| = 1
    x, C, h = 0.7, 1.3, 1e-5
    second = (phi(x + h, C) - 2 * phi(x, C) + phi(x - h, C)) / h**2
    assert second - 2 * C * abs(phi_prime(x, C)) == pytest.approx(1.0, rel=1e-4)


def test_phi_check_on_trivial_run():
    p = make_problem("trivial-zero")
    (X, Y, Z), _, state = run(p, IterationConfig(paths=500, steps=10))
    check = phi_bound_check(1.0, Z, p, state.grid, cond=X)
    assert check["lhs"] == 0.0 and check["passed"]
    assert check["ceiling"] == pytest.approx(bmo_ceiling(1.0, p.C, p.T))
    with pytest.raises(ValueError):
        phi_bound_check(-1.0, Z, p, state.grid)


def test_phi_check_uses_worst_row():
    p = make_problem("trivial-zero", n=2, d=2)
    grid = make_grid(1.0, 4)
    Z = np.zeros((20, 4, 2, 2))
    Z[:, :, 1, 0] = 3.0
    check = phi_bound_check(0.0, Z, p, grid)
    assert check["row_bmo2"] == pytest.approx([0.0, 3.0])
    assert check["lhs"] == pytest.approx(4.5) and not check["passed"]


def test_trivial_residuals_vanish():
    p = make_problem("trivial-zero")
    (X, Y, Z), report, state = run(p, IterationConfig(paths=300, steps=10))
    res = residual_check(p, X, Y, Z, state.bundle, state.grid)
    assert max(res.forward_max, res.backward_max, res.terminal_max) <= 1e-12


def test_corrupted_y_is_detected():
    p = make_problem("trivial-zero")
    (X, Y, Z), _, state = run(p, IterationConfig(paths=300, steps=10))
    Y = Y.copy()
    Y[:, 4, 0] += 1.0
    res = residual_check(p, X, Y, Z, state.bundle, state.grid)
    assert res.backward_max >= 1.0
    assert res.backward_worst_at["step"] in (3, 4)


def test_residual_shape_mismatch():
    p = make_problem("trivial-zero")
    (X, Y, Z), _, state = run(p, IterationConfig(paths=50, steps=4))
    with pytest.raises(ValueError, match="shape mismatch"):
        residual_check(p, X[:, :-1], Y, Z, state.bundle, state.grid)


def test_forward_residual_of_solver_output_is_rounding():
    p = make_problem("coupled-smooth")
    (X, Y, Z), report, state = run(p, IterationConfig(paths=2000, steps=20, projection=False))
    assert report.residuals["forward_max"] <= 1e-12


processes = arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 8), st.integers(1, 3)),
                   elements=st.floats(-1e3, 1e3, allow_nan=False))


@settings(max_examples=100, deadline=None)
@given(processes)
def test_s_norms_are_ordered(V):
    grid = make_grid(1.0, V.shape[1] - 1) if V.shape[1] > 1 else None
    s2, s4, s8 = (s_norm(V, p) for p in (2, 4, 8))
    tol = 1e-12 * max(sup_norm(V), 1.0)
    assert sup_norm(V) + tol >= s8 and s8 + tol >= s4 and s4 + tol >= s2
    if grid is not None:
        assert h_norm(V, 4, grid.dt, grid.N) >= 0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bmo_is_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(60, 5, 1, 1))
    cond = rng.normal(size=(60, 6, 1))
    perm = rng.permutation(60)
    assert bmo2(Z[perm], 0.2) == pytest.approx(bmo2(Z, 0.2), rel=1e-12)
    assert bmo2(Z[perm], 0.2, cond[perm], RegressionBasis(2)) == pytest.approx(bmo2(Z, 0.2, cond, RegressionBasis(2)), rel=1e-9)
