"""Spherical-harmonic eigendata, real orthonormal bases and sphere quadrature.

Full bases and quadrature rules exist for N = 2 (Fourier modes on the circle)
and N = 3 (real spherical harmonics).  In higher dimensions only degrees 0 and
1 are available, in closed form.

Member ordering inside a degree n >= 1 is cos(n t), sin(n t), cos((n-1) t),
..., cos(t), sin(t) in the azimuth, followed by the zonal member when N = 3.
With this ordering the degree-one members are proportional to x_1, x_2 (, x_3).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import lpmv, roots_jacobi

from .params import ParameterError


class UnsupportedDimensionError(NotImplementedError):
    """Raised when a full spherical-harmonic basis is requested for N >= 4."""


def eigenvalue(N: int, n: int) -> int:
    """lambda_n = n^2 + (N-2) n, eigenvalue of -Laplace-Beltrami on S^{N-1}."""
    if N < 2 or n < 0:
        raise ParameterError("need N >= 2 and n >= 0")
    return n * n + (N - 2) * n


def multiplicity(N: int, n: int) -> int:
    """Dimension d_n of the degree-n spherical harmonics on S^{N-1}."""
    if N < 2 or n < 0:
        raise ParameterError("need N >= 2 and n >= 0")
    if n == 0:
        return 1
    if n == 1:
        return N
    return math.comb(N + n - 1, n) - math.comb(N + n - 3, n - 2)


def sphere_area(N: int) -> float:
    """Surface measure |S^{N-1}| = 2 pi^{N/2} / Gamma(N/2)."""
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


@dataclass(frozen=True, order=True)
class ModeIndex:
    """Spherical harmonic (degree, member)."""

    degree: int
    member: int = 0

    def validate(self, N: int) -> "ModeIndex":
        if self.degree < 0:
            raise ParameterError("degree must be >= 0")
        if not (0 <= self.member < multiplicity(N, self.degree)):
            raise ParameterError(
                f"member {self.member} out of range for degree {self.degree} in N={N}"
            )
        return self


@dataclass(frozen=True)
class SphereQuadrature:
    """Quadrature on S^{N-1} exact for polynomials up to ``order``."""

    N: int
    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def integrate(self, values) -> np.ndarray:
        """Integrate samples whose last axis runs over the nodes."""
        return np.asarray(values) @ self.weights

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(self.N)] + ["weight"])
        for x, wt in zip(self.nodes, self.weights):
            w.writerow([format(v, ".17g") for v in (*x, wt)])
        return buf.getvalue()


@lru_cache(maxsize=32)
def _quadrature_cached(N: int, order: int) -> SphereQuadrature:
    if N == 2:
        q = order + 1
        th = 2.0 * np.pi * np.arange(q) / q
        nodes = np.stack([np.cos(th), np.sin(th)], axis=-1)
        weights = np.full(q, 2.0 * np.pi / q)
    elif N == 3:
        nt = order // 2 + 1
        x, wx = np.polynomial.legendre.leggauss(nt)
        nphi = order + 1
        ph = 2.0 * np.pi * np.arange(nphi) / nphi
        st = np.sqrt(1.0 - x * x)
        X = np.outer(st, np.cos(ph)).ravel()
        Y = np.outer(st, np.sin(ph)).ravel()
        Z = np.repeat(x, nphi)
        nodes = np.stack([X, Y, Z], axis=-1)
        weights = np.repeat(wx, nphi) * (2.0 * np.pi / nphi)
    else:
        raise UnsupportedDimensionError("sphere quadrature is provided for N = 2 and N = 3 only")
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return SphereQuadrature(N, nodes, weights, order)


def sphere_quadrature(N: int, order: int = 16) -> SphereQuadrature:
    """Trapezoid rule on the circle, Gauss-Legendre x trapezoid product on S^2."""
    if order < 0:
        raise ParameterError("order must be >= 0")
    return _quadrature_cached(int(N), int(order))


def _azimuthal_m(n: int, member: int) -> tuple[int, str]:
    # member -> (|m|, 'cos' | 'sin' | 'zonal')
    if member == 2 * n:
        return 0, "zonal"
    m = n - member // 2
    return m, "cos" if member % 2 == 0 else "sin"


def harmonic_eval(N: int, idx: ModeIndex, omega) -> np.ndarray:
    """Value of the real orthonormal basis member ``idx`` at unit vectors ``omega``."""
    omega = np.asarray(omega, dtype=float)
    n, j = idx.degree, idx.member
    if N <= 3 or n <= 1:
        idx.validate(N)
    if N >= 4:
        if n == 0:
            return np.full(omega.shape[:-1], 1.0 / math.sqrt(sphere_area(N)))
        if n == 1:
            return math.sqrt(N / sphere_area(N)) * omega[..., j]
        raise UnsupportedDimensionError(
            f"degree {n} harmonics are only available for N = 2, 3 (got N = {N})"
        )
    if N == 2:
        th = np.arctan2(omega[..., 1], omega[..., 0])
        if n == 0:
            return np.full(th.shape, 1.0 / math.sqrt(2.0 * math.pi))
        f = np.cos if j == 0 else np.sin
        return f(n * th) / math.sqrt(math.pi)
    # N == 3
    z = np.clip(omega[..., 2], -1.0, 1.0)
    ph = np.arctan2(omega[..., 1], omega[..., 0])
    if n == 0:
        return np.full(z.shape, 1.0 / math.sqrt(4.0 * math.pi))
    m, kind = _azimuthal_m(n, j)
    norm = math.sqrt((2 * n + 1) / (4.0 * math.pi) * math.factorial(n - m) / math.factorial(n + m))
    # scipy's lpmv carries the Condon-Shortley phase; drop it
    leg = (-1.0) ** m * lpmv(m, n, z)
    if kind == "zonal":
        return norm * leg
    ang = np.cos(m * ph) if kind == "cos" else np.sin(m * ph)
    return math.sqrt(2.0) * norm * leg * ang


def modes_up_to(N: int, degree: int) -> list[ModeIndex]:
    return [ModeIndex(n, j) for n in range(degree + 1) for j in range(multiplicity(N, n))]


def project_mode(u, quad: SphereQuadrature, idx: ModeIndex) -> np.ndarray:
    """T u(r) = integral over the sphere of u(r w) P(w) dsigma(w).

    ``u`` has shape (M, Q): radial nodes by quadrature nodes.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != len(quad.weights):
        raise ParameterError("sample does not match the quadrature rule")
    P = harmonic_eval(quad.N, idx, quad.nodes)
    return u @ (P * quad.weights)


def reconstruct(coefficients: dict, quad: SphereQuadrature) -> np.ndarray:
    """Inverse of ``project_mode``: sum_idx f_idx(r) P_idx(w) on the quadrature nodes."""
    out = None
    for idx, f in coefficients.items():
        term = np.outer(np.asarray(f, dtype=float), harmonic_eval(quad.N, idx, quad.nodes))
        out = term if out is None else out + term
    if out is None:
        raise ParameterError("no modes given")
    return out


def abs_power_integral(N: int, idx: ModeIndex, p: float) -> float:
    """Integral of |P_idx|^p over S^{N-1}.

    Degrees 0 and 1 are evaluated in closed form for every N; higher degrees use
    a fine product quadrature (N = 2, 3 only).
    """
    area = sphere_area(N)
    if idx.degree == 0:
        return area ** (1.0 - p / 2.0)
    if idx.degree == 1:
        kappa = math.sqrt(N / area)
        moment = 2.0 * math.pi ** ((N - 1) / 2) * math.gamma((p + 1) / 2) / math.gamma((N + p) / 2)
        return kappa**p * moment
    if p == 2.0:
        return 1.0
    quad = sphere_quadrature(N, 400)
    return float(quad.integrate(np.abs(harmonic_eval(N, idx, quad.nodes)) ** p))


def zonal_rule(N: int, order: int = 64):
    """Nodes tau and weights for integrals of h(w_j) over S^{N-1}.

    integral h(w_j) dsigma = |S^{N-2}| int_{-1}^{1} h(tau) (1 - tau^2)^{(N-3)/2} dtau.
    """
    a = (N - 3) / 2.0
    tau, w = roots_jacobi(order, a, a)
    return tau, w * sphere_area(N - 1)
