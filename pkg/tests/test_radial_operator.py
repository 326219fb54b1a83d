import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subquad.harmonics import ModeIndex
from subquad.params import NumericalError, OperatorParams, ParameterError
from subquad.radial_operator import (ModeField, RadialGrid, apply, build_mode_operator, derivative,
                                     lp_norm, resolvent_solve, second_derivative,
                                     verification_apply)
from subquad.special_functions import choose_m, psi_coefficients, residual_closed_form


def at(grid, values, r0):
    return np.interp(r0, grid.r, values)


def test_grid_validation_and_json():
    g = RadialGrid(10.0, 100, 2.0)
    assert g.r[-1] == pytest.approx(10.0) and np.all(np.diff(g.r) > 0)
    assert g.ghost_outer > g.r[-1]
    assert RadialGrid.from_json(g.to_json()) == g
    assert g.volumes(3).sum() == pytest.approx(g.half[-1] ** 3 / 3 - g.half[0] ** 3 / 3)
    for bad in ({"R_max": -1}, {"M": 3}, {"gamma": 0.5}):
        with pytest.raises(ParameterError):
            RadialGrid(**bad)


def test_modefield_csv_roundtrip_and_validation():
    g = RadialGrid(5.0, 64, 2.0)
    f = ModeField.from_function(1, g, lambda r: r * np.exp(-r), 3)
    back = ModeField.from_csv(f.to_csv(), ModeIndex(1), g, 3)
    np.testing.assert_array_equal(back.values, f.values)
    assert f.to_csv().count("\n") == g.M + 1
    with pytest.raises(ParameterError):
        ModeField(ModeIndex(0), g, np.zeros(3))
    with pytest.raises(ParameterError):
        ModeField(ModeIndex(0), g, np.full(g.M, np.nan))
    with pytest.raises(ParameterError):
        f + ModeField(ModeIndex(1), RadialGrid(5.0, 65, 2.0), np.zeros(65))


def test_zero_and_constant():
    g = RadialGrid(8.0, 400, 2.0)
    P = OperatorParams(3, 1.0, 0.0)
    op = build_mode_operator(P, 0, g)
    z = ModeField(ModeIndex(0), g, np.zeros(g.M), 3)
    assert not np.any(apply(op, z).values)
    one = op.matvec(np.ones(g.M))
    assert np.max(np.abs(one[:-1])) < 1e-12 * np.max(np.abs(op.diag))


@pytest.mark.parametrize("N", [2, 3, 5])
def test_linear_function_mode_one(N):
    """r P_1 is harmonic: the local error at a fixed radius is O(h^2)."""
    P = OperatorParams(N, 1.0, 0.0)
    errs = []
    for M in (500, 1000, 2000):
        g = RadialGrid(4.0, M, 2.0)
        v = build_mode_operator(P, 1, g).matvec(g.r)
        errs.append(abs(at(g, v, 1.0)))
    assert errs[2] < 1e-4
    assert math.log2(errs[0] / errs[1]) > 1.8 and math.log2(errs[1] / errs[2]) > 1.8


def test_series_residual_o_h2():
    P = OperatorParams(3, 1.0, 1.0)
    m = choose_m(1.0, "phi")
    ser = psi_coefficients(P, m)
    # evaluate at nodes directly to avoid interpolation error
    errs = []
    for M in (1000, 2000, 4000):
        g = RadialGrid(8.0, M, 3.0)
        v = build_mode_operator(P, 0, g).matvec(ser(g.r))
        idx = [int(np.argmin(np.abs(g.r - x))) for x in (0.05, 0.1, 0.3)]
        # the series is not Dirichlet at R: stay well inside
        errs.append(max(abs(v[i] - residual_closed_form(P, m, g.r[i])) for i in idx))
    assert errs[-1] < 1e-4
    assert math.log2(errs[1] / errs[2]) > 1.7


def test_manufactured_gaussian_order():
    N, a, c = 3, 1.5, -2.0
    P = OperatorParams(N, a, c)

    def u(r):
        return np.exp(-r * r)

    def Au(r):
        lap = (4 * r * r - 2 * N) * np.exp(-r * r)
        return -lap + c * r ** (-a) * u(r)

    errs = []
    for M in (1000, 2000, 4000):
        g = RadialGrid(8.0, M, 3.0)
        v = build_mode_operator(P, 0, g).matvec(u(g.r))
        idx = [int(np.argmin(np.abs(g.r - x))) for x in (0.25, 0.5, 1.5, 2.0)]
        errs.append(max(abs(v[i] - Au(g.r[i])) / abs(Au(g.r[i])) for i in idx))
    assert math.log2(errs[0] / errs[1]) > 1.8 and math.log2(errs[1] / errs[2]) > 1.8


def test_symmetrized_matrix():
    g = RadialGrid(5.0, 200, 2.5)
    op = build_mode_operator(OperatorParams(3, 1.2, -1.0), 2, g)
    w = op.weights
    A = op.to_dense()
    S = np.sqrt(w)[:, None] * A / np.sqrt(w)[None, :]
    np.testing.assert_allclose(S, S.T, rtol=1e-12, atol=1e-12 * np.max(np.abs(S)))
    d, e = op.symmetric_bands()
    np.testing.assert_allclose(np.diag(S, 1), e, rtol=1e-12)


def test_resolvent_examples():
    g = RadialGrid(20.0, 800, 3.0)
    P = OperatorParams(3, 1.0, -1.0)
    op = build_mode_operator(P, 1, g)
    zero = ModeField(ModeIndex(1), g, np.zeros(g.M), 3)
    assert not np.any(resolvent_solve(op, 1.0, zero).values)
    u = g.r * np.exp(-g.r)
    lam = 0.7
    f = ModeField(ModeIndex(1), g, lam * u + op.matvec(u), 3)
    back = resolvent_solve(op, lam, f)
    assert np.max(np.abs(back.values - u)) < 1e-10
    # large lambda: ||u|| <= ||f|| / (lam - omega), omega = 1/16 for this mode
    fg = ModeField(ModeIndex(1), g, g.r * np.exp(-g.r**2), 3)
    for lam in (1.0, 10.0, 100.0):
        sol = resolvent_solve(op, lam, fg)
        assert lp_norm(sol, 2) <= lp_norm(fg, 2) / (lam - 0.0625) * (1 + 1e-9)
    with pytest.raises(ParameterError):
        resolvent_solve(op, 1.0, ModeField(ModeIndex(1), RadialGrid(20.0, 801, 3.0), np.ones(801)))


def test_resolvent_singular_shift_reported():
    g = RadialGrid(20.0, 64, 2.0)
    op = build_mode_operator(OperatorParams(3, 1.0, 0.0), 0, g)
    d, e = op.symmetric_bands()
    lam0 = np.linalg.eigvalsh(np.diag(d) + np.diag(e, 1) + np.diag(e, -1))[0]
    f = ModeField(ModeIndex(0), g, np.exp(-g.r), 3)
    with pytest.raises(NumericalError):
        resolvent_solve(op, -lam0, f, backward_tol=1e-300)


def test_resolvent_convergence_order():
    P = OperatorParams(3, 1.0, 1.0)
    lam = 1.0

    def solve(M):
        g = RadialGrid(10.0, M, 2.0)
        f = ModeField(ModeIndex(0), g, np.exp(-g.r**2), 3)
        return g, resolvent_solve(build_mode_operator(P, 0, g), lam, f).values

    sols = [solve(M) for M in (250, 500, 1000, 2000)]
    ref_g, ref = sols[-1]
    pts = np.array([0.3, 0.7, 1.5, 3.0])
    errs = [np.max(np.abs(at(g, v, pts) - at(ref_g, ref, pts))) for g, v in sols[:-1]]
    assert math.log2(errs[0] / errs[1]) > 1.8 and math.log2(errs[1] / errs[2]) > 1.5


def test_lp_norm_examples():
    g = RadialGrid(60.0, 4000, 3.0)
    assert lp_norm(np.zeros(g.M), 2, N=3, grid=g) == 0
    assert lp_norm(np.exp(-g.r), 2, N=3, grid=g) == pytest.approx(math.sqrt(math.pi), rel=1e-6)
    f = ModeField(ModeIndex(0), g, np.exp(-g.r) * math.sqrt(4 * math.pi), 3)
    assert lp_norm(f, 2) == pytest.approx(math.sqrt(math.pi), rel=1e-6)
    # weighted: ||e^-r / r||_2^2 = 4 pi / 2
    assert lp_norm(np.exp(-g.r), 2, 1.0, N=3, grid=g) == pytest.approx(math.sqrt(2 * math.pi), rel=1e-5)
    with pytest.raises(ParameterError):
        lp_norm(np.ones(g.M), 2)


def test_difference_helpers_exact_for_quadratics():
    r = np.sort(np.random.default_rng(1).uniform(0.1, 2, 40))
    q = 3 * r * r - r + 2
    np.testing.assert_allclose(derivative(q, r), 6 * r - 1, rtol=1e-10)
    np.testing.assert_allclose(second_derivative(q, r)[1:-1], 6.0, rtol=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 5), st.floats(0.1, 1.9), st.floats(-3, 3), st.integers(0, 3))
def test_verification_stencil_on_monomial(N, alpha, c, n):
    """A_n r^e = (-(e)(e+N-2) + lambda_n) r^{e-2} + c r^{e-alpha} exactly."""
    P = OperatorParams(N, alpha, c)
    r = np.array([0.05, 0.3, 1.0])
    e = 1.7
    lam = n * n + (N - 2) * n
    exact = (-(e * (e + N - 2)) + lam) * r ** (e - 2) + c * r ** (e - alpha)
    got = verification_apply(lambda x: x**e, P, n, r)
    np.testing.assert_allclose(got, exact, rtol=1e-7, atol=1e-9)


def test_modes_never_mix():
    g = RadialGrid(6.0, 300, 2.0)
    P = OperatorParams(3, 1.0, -1.0)
    a = build_mode_operator(P, 1, g)
    b = build_mode_operator(P, 2, g)
    assert a.n == 1 and b.n == 2
    np.testing.assert_allclose(b.diag - a.diag, (6 - 2) / g.r**2, rtol=1e-12, atol=1e-9)
