"""Regimes of the L^p domain of S, singular corrections, and membership diagnostics.

The domain of S in L^p(R^N) is W^{2,p} when alpha p < N.  For larger alpha it
contains the radial correction eta*phi, and once (alpha - 1) p >= N also the
N vector corrections phi_j = x_j * g(r).  The classification is exact rational
arithmetic on the binary values of the parameters.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np

from .harmonics import (ModeIndex, SphereQuadrature, abs_power_integral, eigenvalue, harmonic_eval,
                        multiplicity, project_mode, sphere_area, sphere_quadrature, zonal_rule)
from .params import NumericalError, OperatorParams, ParameterError
from .radial_operator import ModeField, RadialGrid, derivative, second_derivative
from .special_functions import CorrectionProfile, build_profile, cutoff


class ExtrapolationError(NumericalError):
    """Trace extraction at the origin did not converge."""


class Regime(str, Enum):
    FULL_SOBOLEV = "FullSobolev"
    SCALAR_CORRECTION = "ScalarCorrection"
    FULL_CORRECTION = "FullCorrection"


@dataclass(frozen=True)
class RegimeReport:
    params: OperatorParams
    regime: Regime
    thresholds: tuple
    basis: tuple
    n2_special: bool
    phi_in_W2p_loc: bool
    phi_j_in_W2p_loc: bool

    @property
    def basis_dim(self) -> int:
        return len(self.basis)

    def to_dict(self) -> dict:
        return {
            "N": self.params.N, "p": self.params.p, "alpha": self.params.alpha, "c": self.params.c,
            "regime": self.regime.value,
            "thresholds": list(self.thresholds),
            "basis": list(self.basis),
            "basis_dim": self.basis_dim,
            "n2_special": self.n2_special,
            "phi_in_W2p_loc": self.phi_in_W2p_loc,
            "phi_j_in_W2p_loc": self.phi_j_in_W2p_loc,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def classify(params: OperatorParams) -> RegimeReport:
    N = params.N
    a = Fraction(params.alpha)
    p = Fraction(params.p)
    if a * p < N:
        regime, basis = Regime.FULL_SOBOLEV, ()
    elif (a - 1) * p < N:
        regime, basis = Regime.SCALAR_CORRECTION, ("eta*phi",)
    else:
        regime = Regime.FULL_CORRECTION
        basis = ("eta*phi",) + tuple(f"phi_{j}" for j in range(1, N + 1))
    n2 = (N == 2 and Fraction(3, 2) <= a < 2 and 2 <= (a - 1) * p and (2 - a) * p <= 2)
    return RegimeReport(
        params, regime, (N / params.p, N / params.p + 1.0), basis, bool(n2),
        phi_in_W2p_loc=bool(a * p < N), phi_j_in_W2p_loc=bool((a - 1) * p < N),
    )


def regime_sweep_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "p", "alpha", "regime", "basis_dim"])
    for rep in reports:
        w.writerow([rep.params.N, format(rep.params.p, ".17g"), format(rep.params.alpha, ".17g"),
                    rep.regime.value, rep.basis_dim])
    return buf.getvalue()


# ----------------------------------------------------------------------------
# full-grid samples

@dataclass
class FullGridSample:
    """Values u(r_i w_q) on a radial grid times a sphere quadrature (N = 2, 3)."""

    grid: RadialGrid
    quad: SphereQuadrature
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.M, len(self.quad.weights)):
            raise ParameterError("sample shape must be (M, number of sphere nodes)")

    @property
    def N(self) -> int:
        return self.quad.N

    def points(self) -> np.ndarray:
        return self.grid.r[:, None, None] * self.quad.nodes[None, :, :]

    @classmethod
    def from_function(cls, grid: RadialGrid, quad: SphereQuadrature, func) -> "FullGridSample":
        x = grid.r[:, None, None] * quad.nodes[None, :, :]
        return cls(grid, quad, func(x))

    def project(self, idx: ModeIndex) -> np.ndarray:
        return project_mode(self.values, self.quad, idx)


def eta_phi(profile: CorrectionProfile, r):
    return cutoff(r) * profile.radial(r)


def _extrapolate(r, v, exponents):
    A = np.array([[ri**e for e in exponents] for ri in r])
    return float(np.linalg.solve(A, v)[0])


def _trace(grid: RadialGrid, q: np.ndarray, s: float, r_ref: float, rtol: float) -> float:
    """Limit of q(r) as r -> 0 assuming q = a + b r^2 + d r^{2+s} + ...

    Uses three nodes near r_ref, r_ref/2, r_ref/4 and repeats at twice the
    radii as a convergence check.
    """
    r = grid.r
    exps = (0.0, 2.0, 2.0 + s)

    def at(rr):
        idx = sorted({int(np.argmin(np.abs(r - x))) for x in (rr, rr / 2, rr / 4)})
        if len(idx) < 3:
            raise ExtrapolationError("grid too coarse near the origin for trace extraction")
        return _extrapolate(r[idx], q[idx], exps)

    a1, a2 = at(r_ref), at(2 * r_ref)
    scale = max(1.0, abs(a1))
    if not np.isfinite(a1) or abs(a1 - a2) > rtol * scale:
        raise ExtrapolationError(
            f"trace extrapolation not converged: {a1:.12g} vs {a2:.12g} (r_ref={r_ref:g})")
    return a1


@dataclass
class Decomposition:
    params: OperatorParams
    regime: Regime
    c0: float
    cj: np.ndarray
    remainder: FullGridSample
    phi: CorrectionProfile = field(repr=False)
    phi_j: tuple = field(repr=False, default=())

    def basis_samples(self) -> tuple:
        """(eta*phi, [phi_j]) sampled on the decomposition grid."""
        grid, quad = self.remainder.grid, self.remainder.quad
        r = grid.r
        e = np.repeat(eta_phi(self.phi, r)[:, None], len(quad.weights), axis=1)
        pts = r[:, None, None] * quad.nodes[None, :, :]
        pj = [prof.evaluate(pts) for prof in self.phi_j]
        return e, pj

    def to_dict(self) -> dict:
        return {"regime": self.regime.value, "c0": self.c0, "cj": [float(c) for c in self.cj]}


def _phi_j_profiles(params: OperatorParams):
    return tuple(build_profile(params, "phi_j", j=j) for j in range(1, params.N + 1))


def decompose(u: FullGridSample, params: OperatorParams, r_ref: float = 1e-3,
              rtol: float = 1e-7) -> Decomposition:
    """u = c0 eta phi + sum_j c_j phi_j + remainder, with c0 = u(0), c_j = D_j u_1(0).

    The traces come from extrapolating the mode-0 and mode-1 projections to the
    origin after division by the known radial behaviour of eta*phi and phi_j.
    """
    if u.N != params.N:
        raise ParameterError("sample dimension does not match params")
    rep = classify(params)
    N = params.N
    phi = build_profile(params, "phi")
    pj = _phi_j_profiles(params)
    grid = u.grid
    r = grid.r
    zero = np.zeros(N)
    if rep.regime is Regime.FULL_SOBOLEV:
        return Decomposition(params, rep.regime, 0.0, zero, FullGridSample(grid, u.quad, u.values.copy()),
                             phi, pj)
    s = params.s
    P0 = 1.0 / math.sqrt(sphere_area(N))
    mean = u.project(ModeIndex(0)) * P0
    # quotients are only read near the origin; outside supp(eta) they are 0/0
    with np.errstate(divide="ignore", invalid="ignore"):
        c0 = _trace(grid, mean / eta_phi(phi, r), s, r_ref, rtol)
    rem = u.values - c0 * eta_phi(phi, r)[:, None]
    cj = zero.copy()
    if rep.regime is Regime.FULL_CORRECTION:
        kappa = math.sqrt(N / sphere_area(N))
        g = pj[0].radial(r)
        for j in range(N):
            T = project_mode(rem, u.quad, ModeIndex(1, j))
            with np.errstate(divide="ignore", invalid="ignore"):
                cj[j] = _trace(grid, kappa * T / (r * g), s, r_ref, rtol)
        pts = u.points()
        for j in range(N):
            rem = rem - cj[j] * pj[j].evaluate(pts)
    return Decomposition(params, rep.regime, c0, cj, FullGridSample(grid, u.quad, rem), phi, pj)


def reconstruct(dec: Decomposition) -> FullGridSample:
    """c0 eta phi + sum c_j phi_j + remainder on the sample grid."""
    e, pj = dec.basis_samples()
    out = dec.remainder.values + dec.c0 * e
    for c, f in zip(dec.cj, pj):
        out = out + c * f
    return FullGridSample(dec.remainder.grid, dec.remainder.quad, out)


# ----------------------------------------------------------------------------
# membership diagnostics

@dataclass
class MembershipDiagnostics:
    verdict: str  # "member" | "non-member" | "inconclusive"
    epsilons: np.ndarray
    weighted: np.ndarray
    hessian: np.ndarray
    weighted_rate: float
    hessian_rate: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "epsilons": list(map(float, self.epsilons)),
                "weighted": list(map(float, self.weighted)), "hessian": list(map(float, self.hessian)),
                "weighted_rate": self.weighted_rate, "hessian_rate": self.hessian_rate,
                "detail": self.detail}


def _mode_hessian_pow(N, n, r, f, p, zonal_order=48):
    """Sphere integral of |D^2 (f P_n)|^p at each radius (exact form for n <= 1)."""
    if n == 0:
        f1, f2 = derivative(f, r), second_derivative(f, r)
        h2 = f2**2 + (N - 1) * (f1 / r) ** 2
        return abs_power_integral(N, ModeIndex(0), p) * h2 ** (p / 2)
    if n == 1:
        kappa = math.sqrt(N / sphere_area(N))
        g = kappa * f / r  # u = g(r) x_j
        g1, g2 = derivative(g, r), second_derivative(g, r)
        tau, w = zonal_rule(N, zonal_order)
        t2 = tau[None, :] ** 2
        h2 = (t2 * (2 * g1[:, None] + r[:, None] * g2[:, None]) ** 2
              + 2 * g1[:, None] ** 2 * (1 - t2) + (N - 1) * t2 * g1[:, None] ** 2)
        return h2 ** (p / 2) @ w
    lam = eigenvalue(N, n)
    env = np.abs(second_derivative(f, r)) + np.abs(derivative(f, r)) / r + lam * np.abs(f) / r**2
    return abs_power_integral(N, ModeIndex(n), p) * env**p


def _octave_pieces(r, dens, eps_edges):
    """Trapezoid integral of dens over each [eps_{k+1}, eps_k] (edges decreasing).

    Octaves are integrated separately so that a diverging inner part cannot
    swamp the outer octaves through cancellation.
    """
    out = np.empty(len(eps_edges) - 1)
    for k, (hi, lo) in enumerate(zip(eps_edges[:-1], eps_edges[1:])):
        inside = (r > lo) & (r < hi)
        xs = np.concatenate([[lo], r[inside], [hi]])
        ys = np.concatenate([np.interp([lo], r, dens), dens[inside], np.interp([hi], r, dens)])
        out[k] = np.trapezoid(ys, xs)
    return out


def _rate(pieces):
    pos = pieces > 0
    if pos.sum() < 3:
        return -math.inf
    v = pieces[pos]
    return float(np.median(np.log2(v[1:] / v[:-1])))


def membership_test(u, params: OperatorParams, max_degree: int = 1, tol: float = 0.05,
                    negligible: float = 1e-10, min_nodes: int = 8,
                    reference=None) -> MembershipDiagnostics:
    """Is u (near the origin) in W^{2,p} with |x|^-alpha u in L^p?

    Truncated norms over eps < |x| < 1 are accumulated octave by octave
    (eps = 2^-k) for the weighted norm and the Hessian norm.  An octave
    increment ratio 2^q with q > -tol in either sequence means divergence.
    Octave contributions below ``negligible`` times the total of the outer
    octave are treated as zero; with ``reference`` (e.g. the field a remainder
    was split from) the outer octave of the reference sets that scale instead,
    so rounding-level leftovers of a singular part are not mistaken for
    divergence.  The deepest octave used still contains
    ``min_nodes`` grid nodes.
    """
    N, p, a = params.N, params.p, params.alpha
    modes, grid = _collect_modes(u, N, max_degree)
    r = grid.r
    edges = [1.0]
    while True:
        lo = edges[-1] / 2
        if np.count_nonzero((r >= lo) & (r <= edges[-1])) < min_nodes or lo < r[0]:
            break
        edges.append(lo)
    edges = np.array(edges)
    if len(edges) < 5:
        return MembershipDiagnostics("inconclusive", edges, np.array([]), np.array([]),
                                     math.nan, math.nan, "too few resolved octaves")

    def pieces(modes):
        wp = np.zeros(len(edges) - 1)
        hp = np.zeros(len(edges) - 1)
        for idx, f in modes.items():
            f = np.asarray(f, dtype=float)
            if not np.any(f):
                continue
            ang = abs_power_integral(N, idx, p)
            wp += _octave_pieces(r, ang * np.abs(f) ** p * r ** (N - 1 - a * p), edges)
            hp += _octave_pieces(r, _mode_hessian_pow(N, idx.degree, r, f, p) * r ** (N - 1), edges)
        return wp, hp

    wp, hp = pieces(modes)
    if reference is not None:
        ref_modes, ref_grid = _collect_modes(reference, N, max_degree)
        if ref_grid != grid:
            raise ParameterError("reference must live on the same grid")
        rw0, rh0 = pieces(ref_modes)
        ref_w, ref_h = max(rw0[0], wp[0]), max(rh0[0], hp[0])
    else:
        ref_w, ref_h = wp[0], hp[0]

    def clean(x, ref):
        return np.where(x < negligible * max(ref, 1e-300), 0.0, x)

    wp_c, hp_c = clean(wp, ref_w), clean(hp, ref_h)
    rw, rh = _rate(wp_c[1:]), _rate(hp_c[1:])
    eps = edges[1:]
    weighted = np.cumsum(wp) ** (1 / p)
    hessian = np.cumsum(hp) ** (1 / p)
    if not np.any(wp_c) and not np.any(hp_c):
        return MembershipDiagnostics("member", eps, weighted, hessian, -math.inf, -math.inf,
                                     "negligible near the origin")
    div = rw > -tol or rh > -tol
    conv = rw < -tol and rh < -tol
    verdict = "non-member" if div else "member" if conv else "inconclusive"
    return MembershipDiagnostics(verdict, eps, weighted, hessian, rw, rh)


def _collect_modes(u, N, max_degree):
    if isinstance(u, FullGridSample):
        grid = u.grid
        max_degree = min(max_degree, u.quad.order // 2)
        modes = {ModeIndex(n, j): u.project(ModeIndex(n, j))
                 for n in range(max_degree + 1) for j in range(multiplicity(N, n))}
    elif isinstance(u, ModeField):
        grid, modes = u.grid, {u.mode: u.values}
    elif isinstance(u, dict):
        first = next(iter(u.values()))
        grid = first.grid
        modes = {k: f.values for k, f in u.items()}
    else:
        raise ParameterError("unsupported input for membership_test")
    return modes, grid


# ----------------------------------------------------------------------------
# W^{2,p} splitting basis

@dataclass(frozen=True)
class SplitBasis:
    N: int
    p: float
    case: str  # "empty" | "w0" | "w0+wj"
    names: tuple

    def fields(self, grid: RadialGrid) -> dict:
        """w_0 = eta and w_j = x_j eta as mode fields on ``grid``."""
        r = grid.r
        out = {}
        if self.case == "empty":
            return out
        eta = cutoff(r)
        out["w_0"] = ModeField(ModeIndex(0), grid, eta * math.sqrt(sphere_area(self.N)), self.N)
        if self.case == "w0+wj":
            kappa = math.sqrt(self.N / sphere_area(self.N))
            for j in range(self.N):
                out[f"w_{j + 1}"] = ModeField(ModeIndex(1, j), grid, r * eta / kappa, self.N)
        return out


def sobolev_split_basis(N: int, p: float) -> SplitBasis:
    """Which of eta, x_j eta complement {u in W^{2,p} : u(0) = 0 (, grad u(0) = 0)}."""
    if N < 2 or not p > 1:
        raise ParameterError("need N >= 2 and p > 1")
    P = Fraction(p)
    if 2 * P <= N:
        return SplitBasis(N, p, "empty", ())
    if P <= N:
        return SplitBasis(N, p, "w0", ("w_0",))
    return SplitBasis(N, p, "w0+wj", ("w_0",) + tuple(f"w_{j}" for j in range(1, N + 1)))
