"""Graded radial meshes and the discrete mode operators.

For a spherical-harmonic coefficient c_n(r) the operator acts as

    A_n u = -u'' - (N-1)/r u' + (c r^-alpha + lambda_n r^-2) u.

It is discretized in flux form, -r^{1-N} (r^{N-1} u')' , with control volumes
between mapped midpoints of the power mesh.  The resulting tridiagonal matrix
is W^{-1} K + V with K symmetric, so the similarity W^{1/2} A W^{-1/2} is
symmetric and, for c >= 0, (I + dt A) is an M-matrix.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import lapack

from .harmonics import ModeIndex, abs_power_integral, eigenvalue, sphere_area
from .params import NumericalError, OperatorParams, ParameterError


@dataclass(frozen=True)
class RadialGrid:
    """Power mesh r_i = R_max (i/M)^gamma, i = 1..M (origin excluded)."""

    R_max: float = 60.0
    M: int = 2000
    gamma: float = 3.0

    def __post_init__(self):
        if not self.R_max > 0:
            raise ParameterError("R_max must be positive")
        if int(self.M) != self.M or self.M < 16:
            raise ParameterError("M must be an integer >= 16")
        if not self.gamma >= 1:
            raise ParameterError("grading gamma must be >= 1")

    def _map(self, s):
        return self.R_max * (np.asarray(s, dtype=float) / self.M) ** self.gamma

    @cached_property
    def r(self) -> np.ndarray:
        r = self._map(np.arange(1, self.M + 1))
        r.setflags(write=False)
        return r

    @cached_property
    def ghost_outer(self) -> float:
        """Node just beyond R_max carrying the homogeneous Dirichlet value."""
        return float(self._map(self.M + 1))

    @cached_property
    def half(self) -> np.ndarray:
        """Mapped midpoints r_{i+1/2}, i = 0..M."""
        h = self._map(np.arange(0, self.M + 1) + 0.5)
        h.setflags(write=False)
        return h

    def volumes(self, N: int) -> np.ndarray:
        """Control volumes int_{r_{i-1/2}}^{r_{i+1/2}} r^{N-1} dr."""
        h = self.half
        return (h[1:] ** N - h[:-1] ** N) / N

    def to_dict(self) -> dict:
        return {"R_max": self.R_max, "M": self.M, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "RadialGrid":
        return cls(float(d.get("R_max", 60.0)), int(d.get("M", 2000)), float(d.get("gamma", 3.0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RadialGrid":
        return cls.from_dict(json.loads(text))


@dataclass
class ModeField:
    """Sampled radial coefficient c_n(r) of one spherical-harmonic mode."""

    mode: ModeIndex
    grid: RadialGrid
    values: np.ndarray
    N: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.M,):
            raise ParameterError(f"expected {self.grid.M} values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("mode field values must be finite")

    @classmethod
    def from_function(cls, mode, grid: RadialGrid, f, N: int | None = None) -> "ModeField":
        if isinstance(mode, int):
            mode = ModeIndex(mode)
        return cls(mode, grid, f(grid.r), N)

    def copy_with(self, values) -> "ModeField":
        return ModeField(self.mode, self.grid, values, self.N)

    def __add__(self, other: "ModeField") -> "ModeField":
        _check_same_grid(self, other)
        return self.copy_with(self.values + other.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "value"])
        for r, v in zip(self.grid.r, self.values):
            w.writerow([format(r, ".17g"), format(v, ".17g")])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, mode: ModeIndex, grid: RadialGrid, N: int | None = None) -> "ModeField":
        rows = list(csv.reader(io.StringIO(text)))
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        if data.shape[0] != grid.M or not np.allclose(data[:, 0], grid.r, rtol=1e-14, atol=0):
            raise ParameterError("CSV radii do not match the grid")
        return cls(mode, grid, data[:, 1], N)


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise ParameterError("grid mismatch")


@dataclass
class DiscreteModeOperator:
    """Tridiagonal A_n: ``sub[i]`` couples node i+1 to i, ``sup[i]`` node i to i+1."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    n: int
    params: OperatorParams
    grid: RadialGrid
    weights: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.diag.size

    def matvec(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = self.diag * u
        out[:-1] += self.sup * u[1:]
        out[1:] += self.sub * u[:-1]
        return out

    def symmetric_bands(self) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal and off-diagonal of W^{1/2} A W^{-1/2}."""
        return self.diag.copy(), -np.sqrt(self.sub * self.sup)

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.sup, 1) + np.diag(self.sub, -1)

    def potential(self) -> np.ndarray:
        r = self.grid.r
        lam = eigenvalue(self.params.N, self.n)
        return self.params.c * r ** (-self.params.alpha) + lam / r**2


def build_mode_operator(params: OperatorParams, n: int, grid: RadialGrid) -> DiscreteModeOperator:
    """Assemble A_n on ``grid``.

    Dirichlet data sits on a ghost node just beyond R_max.  At the inner edge the
    ghost value at r = 0 is u(r_1) (r_0/r_1)^min(n, 2): u(r_1) for the radial
    mode (zero flux) and 0 for n >= 1.
    """
    if n < 0:
        raise ParameterError("mode degree must be >= 0")
    N = params.N
    r = grid.r
    rg = np.concatenate([[0.0], r, [grid.ghost_outer]])
    hm = rg[1:-1] - rg[:-2]
    hp = rg[2:] - rg[1:-1]
    w = grid.volumes(N)
    flux = grid.half ** (N - 1)
    lo = -flux[:-1] / hm / w
    up = -flux[1:] / hp / w
    diag = -lo - up
    ghost = (0.0 / r[0]) ** min(n, 2)
    diag[0] += lo[0] * ghost
    lam = eigenvalue(N, n)
    diag = diag + params.c * r ** (-params.alpha) + lam / r**2
    return DiscreteModeOperator(lo[1:].copy(), diag, up[:-1].copy(), n, params, grid, w)


def apply(op: DiscreteModeOperator, f: ModeField) -> ModeField:
    if f.grid != op.grid:
        raise ParameterError("grid mismatch between operator and field")
    return f.copy_with(op.matvec(f.values))


def _weighted_norm(v, w) -> float:
    return float(np.sqrt(np.sum(w * v * v)))


def resolvent_solve(op: DiscreteModeOperator, lam: float, f: ModeField,
                    backward_tol: float = 1e-10) -> ModeField:
    """Solve (lam I + A_n) u = f by tridiagonal LU.

    The backward error is measured in the discrete L^2(r^{N-1} dr) norm.
    """
    if f.grid != op.grid:
        raise ParameterError("grid mismatch between operator and field")
    b = f.values
    if not np.any(b):
        return f.copy_with(np.zeros_like(b))
    dl, d, du = op.sub.copy(), op.diag + lam, op.sup.copy()
    dl_f, d_f, du_f, du2, ipiv, info = lapack.dgttrf(dl, d, du)
    if info != 0:
        raise NumericalError(f"resolvent system singular at pivot {info} (lambda={lam})")
    anorm = np.max(np.abs(d) + np.r_[np.abs(du), 0.0] + np.r_[0.0, np.abs(dl)])
    rcond, _ = lapack.dgtcon(dl_f, d_f, du_f, du2, ipiv, anorm)
    x, info = lapack.dgttrs(dl_f, d_f, du_f, du2, ipiv, b)
    if info != 0 or not np.all(np.isfinite(x)):
        raise NumericalError(f"resolvent solve failed (lambda={lam}, rcond={rcond:.3e})")
    res = lam * x + op.matvec(x) - b
    w = op.weights
    berr = _weighted_norm(res, w) / _weighted_norm(b, w)
    if berr > backward_tol:
        raise NumericalError(
            f"resolvent backward error {berr:.3e} exceeds {backward_tol:.1e} (rcond={rcond:.3e})"
        )
    return f.copy_with(x)


def lp_norm(u, p: float, a: float = 0.0, *, N: int | None = None,
            grid: RadialGrid | None = None) -> float:
    """Trapezoid approximation of || r^-a u ||_{L^p(R^N)}.

    ``u`` is either a ModeField (the function c(r) P(w), angular factor
    int |P|^p) or an array of radial function values on ``grid`` (angular
    factor |S^{N-1}|).
    """
    if p < 1:
        raise ParameterError("p must be >= 1")
    if isinstance(u, ModeField):
        grid = u.grid
        N = N or u.N
        if N is None:
            raise ParameterError("dimension N is required")
        vals = u.values
        ang = abs_power_integral(N, u.mode, p)
    else:
        if grid is None or N is None:
            raise ParameterError("grid and N are required for plain arrays")
        vals = np.asarray(u, dtype=float)
        ang = sphere_area(N)
    r = grid.r
    integrand = np.abs(vals * r ** (-a)) ** p * r ** (N - 1)
    return float((ang * np.trapezoid(integrand, r)) ** (1.0 / p))


def derivative(values, r) -> np.ndarray:
    """Three-point first derivative on a nonuniform mesh (exact for quadratics)."""
    return np.gradient(np.asarray(values, dtype=float), r, edge_order=2)


def second_derivative(values, r) -> np.ndarray:
    """Three-point second derivative on a nonuniform mesh (exact for quadratics)."""
    u = np.asarray(values, dtype=float)
    out = np.empty_like(u)
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    out[1:-1] = 2.0 * (u[:-2] / (hm * (hm + hp)) - u[1:-1] / (hm * hp) + u[2:] / (hp * (hm + hp)))
    out[0], out[-1] = out[1], out[-2]
    return out


# integer weights (divided by 12 afterwards) so constants difference to exactly 0
_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0])
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0])


def verification_apply(func, params: OperatorParams, n: int, r, h: float = 5e-3,
                       kind: str = "scalar"):
    """Fourth-order evaluation of A_n f at radii ``r`` for a callable ``f``.

    Central five-point differences in t = log r:
    f'' + (N-1)/r f' = (f_tt + (N-2) f_t) / r^2.
    Used to verify identities, never in production paths.  The default step
    balances the O(h^4) truncation against rounding in the second difference
    (which grows like eps / h^2 relative to the largest term).
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    t = np.log(r)[:, None] + h * np.arange(-2, 3)[None, :]
    N = params.N
    lam = eigenvalue(N, n)
    # a series is differenced term by term: 1 + (small) would otherwise lose
    # the small part to rounding before the stencil sees it
    terms = func.terms() if hasattr(func, "terms") else [func]
    out = np.zeros_like(r)
    for term in terms:
        F = term(np.exp(t))
        ft = (F @ _D1) / (12.0 * h)
        ftt = (F @ _D2) / (12.0 * h * h)
        lap = (ftt + (N - 2) * ft) / r**2
        out += -lap + (params.c * r ** (-params.alpha) + lam / r**2) * F[:, 2]
    return out
