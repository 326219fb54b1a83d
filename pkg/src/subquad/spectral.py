"""Bound states of the mode operators and an explicit negative-energy family.

For c < 0 the radial profiles w_n = r^n exp(-g r^s) P_n, s = 2 - alpha, with
g = g_n = -c / (s (N - alpha + 2n)), satisfy

    S w_n = -(c / (N - alpha + 2n))^2 r^(2 - 2 alpha) w_n,

so every (S w_n, w_n) is negative and the w_n of distinct degree are
orthogonal both in L^2 and for the form of S.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal, lapack

from .harmonics import (ModeIndex, UnsupportedDimensionError, eigenvalue, harmonic_eval,
                        sphere_quadrature)
from .params import NumericalError, OperatorParams, ParameterError
from .radial_operator import ModeField, RadialGrid, build_mode_operator
from .special_functions import _gauss_legendre_log


@dataclass
class EigenResult:
    params: OperatorParams
    n: int
    grid: RadialGrid
    eigenvalues: np.ndarray
    fields: list = field(repr=False)
    residuals: np.ndarray = None

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "mode": self.n,
            "grid": self.grid.to_dict(),
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "residuals": [float(x) for x in self.residuals],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _inverse_iteration(d, e, sigma, basis, max_iter=8, tol=1e-8, seed=0):
    """Eigenvector of the symmetric tridiagonal (d, e) for the shift ``sigma``.

    Previously found vectors in ``basis`` are projected out at every sweep, which
    keeps clustered eigenvalues (truncation of the continuum) apart.
    """
    M = d.size
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(M)
    scale = max(abs(sigma), 1e-300)
    shift = sigma
    for attempt in range(3):
        dl_f, d_f, du_f, du2, ipiv, info = lapack.dgttrf(e.copy(), d - shift, e.copy())
        if info == 0:
            break
        shift = sigma + (10.0 ** (attempt - 14)) * scale
    else:
        raise NumericalError(f"inverse iteration: singular shift {sigma}")
    lam = sigma
    res = math.inf
    for _ in range(max_iter):
        for b in basis:
            x -= (b @ x) * b
        x /= np.linalg.norm(x)
        y, info = lapack.dgttrs(dl_f, d_f, du_f, du2, ipiv, x)
        for b in basis:
            y -= (b @ y) * b
        x = y / np.linalg.norm(y)
        hx = d * x
        hx[:-1] += e * x[1:]
        hx[1:] += e * x[:-1]
        lam = float(x @ hx)
        res = float(np.linalg.norm(hx - lam * x))
        if res <= tol:
            return x, lam, res
    raise NumericalError(f"inverse iteration did not converge (residual {res:.2e}, shift {sigma})")


def eigen_lowest(params: OperatorParams, n: int, k: int = 1,
                 grid: RadialGrid | None = None) -> EigenResult:
    """k smallest eigenvalues of the discrete A_n with eigenfields.

    Eigenvalues are bracketed by Sturm bisection on the symmetrized matrix,
    eigenvectors come from shifted inverse iteration with deflation.  Fields are
    normalized in L^2(r^{N-1} dr) and positive at their largest entry.
    """
    if k < 1:
        raise ParameterError("k must be >= 1")
    grid = grid or RadialGrid()
    op = build_mode_operator(params, n, grid)
    d, e = op.symmetric_bands()
    # absolute tolerance: the graded diagonal spans ~20 decades, so the default
    # (relative to ||T||) would be useless for the eigenvalues near the bottom
    vals = eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, k - 1),
                            tol=1e-15)
    sqw = np.sqrt(op.weights)
    basis, lams, res, fields = [], [], [], []
    for i, sigma in enumerate(vals):
        x, lam, r = _inverse_iteration(d, e, float(sigma), basis, seed=i)
        basis.append(x)
        lams.append(lam)
        res.append(r)
        u = x / sqw
        if u[np.argmax(np.abs(u))] < 0:
            u = -u
        fields.append(ModeField(ModeIndex(n), grid, u, params.N))
    return EigenResult(params, n, grid, np.array(lams), fields, np.array(res))


@dataclass
class BoundStateCandidate:
    params: OperatorParams
    n: int
    gamma: float
    predicted_factor: float
    field: ModeField = field(repr=False)
    membership_caveat: bool = False

    @property
    def potential_exponent(self) -> float:
        return 2.0 - 2.0 * self.params.alpha

    def radial(self, r, deriv: int = 0):
        """r^n e^{-g r^s} and its first derivative."""
        r = np.asarray(r, dtype=float)
        s, n, g = self.params.s, self.n, self.gamma
        f = r**n * np.exp(-g * r**s)
        if deriv == 0:
            return f
        if deriv == 1:
            return f * (n / r - g * s * r ** (s - 1))
        raise ParameterError("deriv must be 0 or 1")

    def discrete_residual(self) -> float:
        """|| A_n w - predicted r^{2-2a} w || / || w || on the candidate's grid."""
        op = build_mode_operator(self.params, self.n, self.field.grid)
        w = self.field.values
        r = self.field.grid.r
        diff = op.matvec(w) - self.predicted_factor * r**self.potential_exponent * w
        vol = op.weights
        mask = r < 0.9 * r[-1]  # the Dirichlet cut is not part of the identity
        return float(np.sqrt(np.sum(vol[mask] * diff[mask] ** 2) / np.sum(vol * w * w)))

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "mode": self.n, "gamma": self.gamma,
                "predicted_factor": self.predicted_factor,
                "potential_exponent": self.potential_exponent,
                "membership_caveat": self.membership_caveat}


def natural_radius(params: OperatorParams, n: int, gamma: float, decades: float = 40.0) -> float:
    """Radius where r^n e^{-g r^s} has dropped ``decades`` e-folds below its peak."""
    s = params.s

    def logf(r):
        return n * math.log(r) - gamma * r**s

    peak = max((n / (gamma * s)) ** (1.0 / s), 1.0) if n > 0 else 1.0
    target = logf(peak) - decades
    R = peak
    while logf(R) > target:
        R *= 1.1
    return R


def bound_state_candidate(params: OperatorParams, n: int,
                          grid: RadialGrid | None = None) -> BoundStateCandidate:
    if params.c >= 0:
        raise ParameterError("the negative-energy family requires c < 0")
    if n < 0:
        raise ParameterError("n must be >= 0")
    N, a, c, s = params.N, params.alpha, params.c, params.s
    denom = N - a + 2 * n
    g = -c / (s * denom)
    if grid is None:
        grid = RadialGrid(R_max=natural_radius(params, n, g), M=2000, gamma=3.0)
    r = grid.r
    vals = r**n * np.exp(-g * r**s)
    fld = ModeField(ModeIndex(n), grid, vals, N)
    return BoundStateCandidate(params, n, g, -(c * c) / denom**2, fld, membership_caveat=n < 2)


def _form_integrand_quadrature(params, n, f, fp, R, panels=400):
    t, wt = _gauss_legendre_log(math.log(R) - 60.0, math.log(R), panels)
    r = np.exp(t)
    N, lam = params.N, eigenvalue(params.N, n)
    jac = wt * r**N  # dr = r dt, times r^{N-1}
    fv, fd = f(r), fp(r)
    energy = np.sum(jac * (fd**2 + lam * fv**2 / r**2 + params.c * r ** (-params.alpha) * fv**2))
    mass = np.sum(jac * fv**2)
    return float(energy), float(mass)


def rayleigh_quotient(u, params: OperatorParams, method: str = "discrete") -> float:
    """a(u,u)/||u||^2 with a(u,v) = int grad u . grad v + c r^-alpha u v.

    ``u`` may be a ModeField (discrete form on its grid), a dict of ModeFields of
    distinct modes (the harmonics are orthonormal, so the quotient is the ratio
    of summed energies), or a BoundStateCandidate with ``method="analytic"``
    (Gauss-Legendre on the closed-form profile).
    """
    if isinstance(u, BoundStateCandidate) and method == "analytic":
        R = natural_radius(params, u.n, u.gamma)
        en, ms = _form_integrand_quadrature(params, u.n, u.radial, lambda r: u.radial(r, 1), R)
        if ms == 0:
            raise ParameterError("zero norm")
        return en / ms
    if isinstance(u, BoundStateCandidate):
        u = u.field
    fields = u.values() if isinstance(u, dict) else [u]
    energy = mass = 0.0
    for f in fields:
        op = build_mode_operator(params, f.mode.degree, f.grid)
        v = f.values
        energy += float(np.sum(op.weights * v * op.matvec(v)))
        mass += float(np.sum(op.weights * v * v))
    if mass == 0:
        raise ParameterError("zero norm")
    return energy / mass


def analytic_form_value(params: OperatorParams, n: int) -> tuple[float, float]:
    """Closed forms of (S w_n, w_n) and ||w_n||^2 for the unit-harmonic family."""
    N, a, s = params.N, params.alpha, params.s
    g = -params.c / (s * (N - a + 2 * n))
    pred = -(params.c / (N - a + 2 * n)) ** 2

    def moment(k):  # int_0^inf r^k e^{-2 g r^s} dr
        q = (k + 1) / s
        return math.gamma(q) / (s * (2 * g) ** q)

    return pred * moment(2 * n + N - 1 + 2 - 2 * a), moment(2 * n + N - 1)


@dataclass
class NegativityReport:
    params: OperatorParams
    degrees: list
    quotients: list
    analytic_quotients: list
    gram_offdiag: float
    form_gram_offdiag: float
    passed: bool

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "degrees": self.degrees,
                "quotients": self.quotients, "analytic_quotients": self.analytic_quotients,
                "gram_offdiag": self.gram_offdiag, "form_gram_offdiag": self.form_gram_offdiag,
                "passed": self.passed}


def negativity_certificate(params: OperatorParams, n_range=range(2, 7),
                           grid: RadialGrid | None = None, tol: float = 1e-8) -> NegativityReport:
    """Certify that span{w_n} is a negative subspace of the form of S.

    The Gram matrices (w_n, w_k) and (S w_n, w_k) are assembled on a full
    r x sphere product grid (N = 2, 3) and must be diagonal within ``tol``
    relative to their diagonal.
    """
    if params.c >= 0:
        raise ParameterError("negativity certificate requires c < 0")
    N = params.N
    if N > 3:
        raise UnsupportedDimensionError("full-grid Gram matrices need N = 2 or 3")
    degrees = list(n_range)
    cands = [bound_state_candidate(params, n) for n in degrees]
    Rmax = max(c.field.grid.R_max for c in cands)
    grid = grid or RadialGrid(R_max=Rmax, M=3000, gamma=3.0)
    cands = [bound_state_candidate(params, n, grid) for n in degrees]
    quad = sphere_quadrature(N, 2 * max(degrees) + 2)
    vol = grid.volumes(N)
    radial = np.array([c.field.values for c in cands])
    s_radial = np.array([build_mode_operator(params, c.n, grid).matvec(c.field.values)
                         for c in cands])
    angular = np.array([harmonic_eval(N, ModeIndex(n), quad.nodes) for n in degrees])
    ang_gram = (angular * quad.weights) @ angular.T
    G = (radial * vol) @ radial.T * ang_gram
    F = (s_radial * vol) @ radial.T * ang_gram
    F = 0.5 * (F + F.T)

    def offdiag(A):
        dg = np.sqrt(np.abs(np.diag(A)))
        rel = np.abs(A) / np.outer(dg, dg)
        np.fill_diagonal(rel, 0.0)
        return float(rel.max()) if rel.size > 1 else 0.0

    quotients = [float(F[i, i] / G[i, i]) for i in range(len(degrees))]
    analytic = []
    for n in degrees:
        en, ms = analytic_form_value(params, n)
        analytic.append(en / ms)
    g_off, f_off = offdiag(G), offdiag(F)
    passed = all(q < 0 for q in quotients) and g_off <= tol and f_off <= tol
    return NegativityReport(params, degrees, quotients, analytic, g_off, f_off, passed)
