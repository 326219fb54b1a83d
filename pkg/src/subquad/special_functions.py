"""Correction series psi, psi-tilde and the patched profiles phi, phi_j.

The scalar series

    psi(r) = sum_{k=0}^m gamma_k r^{(2-alpha)k}

is built so that (-Delta + c|x|^-alpha) psi collapses to a single power
c gamma_m r^{(2-alpha)m - alpha}; the vector series multiplies x_j and plays the
same role for first-order spherical harmonics.  Profiles glue the series near
the origin to a constant (phi) or to zero (phi_j) with a C^2 smoothstep.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .params import NumericalError, OperatorParams, ParameterError

Kind = Literal["phi", "phi_j"]

# Lanczos approximation, g = 7, nine terms.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma(x: float) -> float:
    """Gamma function for real x by the Lanczos approximation.

    Accurate to roughly 15 significant digits on the positive axis; negative
    non-integer arguments go through the reflection formula.
    """
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise ParameterError(f"gamma has a pole at {x}")
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    x -= 1.0
    acc = _LANCZOS_COEF[0]
    for i, coef in enumerate(_LANCZOS_COEF[1:], start=1):
        acc += coef / (x + i)
    t = x + _LANCZOS_G + 0.5
    # t^(x+1/2) e^-t split in halves so that large x does not overflow early
    half = t ** (0.5 * (x + 0.5)) * math.exp(-0.5 * t)
    return math.sqrt(2.0 * math.pi) * half * half * acc


def _series_shift(params: OperatorParams, kind: str) -> float:
    # a in gamma_k = c^k Gamma(a) / (s^{2k} k! Gamma(a + k))
    s = params.s
    if kind in ("scalar", "phi"):
        return (params.N - params.alpha) / s
    return params.N / s + 1.0


@dataclass(frozen=True)
class PowerSeriesRadial:
    """Finite series sum_k coefficients[k] * r**(base_exponent*k).

    ``kind`` is ``"scalar"`` for psi and ``"vector"`` for the factor psi-tilde
    that multiplies x_j.
    """

    base_exponent: float
    coefficients: tuple
    kind: Literal["scalar", "vector"] = "scalar"

    @property
    def m(self) -> int:
        return len(self.coefficients) - 1

    def terms(self) -> list:
        """The monomials g_k r^{s k} as separate callables (for linear stencils)."""
        s = self.base_exponent
        return [(lambda r, g=g, e=s * k: g * np.asarray(r, dtype=float) ** e)
                for k, g in enumerate(self.coefficients)]

    def __call__(self, r, deriv: int = 0):
        r = np.asarray(r, dtype=float)
        s = self.base_exponent
        out = np.zeros_like(r)
        for k, g in enumerate(self.coefficients):
            e = s * k
            if deriv == 0:
                out = out + g * r**e
            elif deriv == 1:
                if k:
                    out = out + g * e * r ** (e - 1.0)
            elif deriv == 2:
                if k:
                    out = out + g * e * (e - 1.0) * r ** (e - 2.0)
            else:
                raise ValueError("deriv must be 0, 1 or 2")
        return out


def psi_coefficients(params: OperatorParams, m: int) -> PowerSeriesRadial:
    """Coefficients of the scalar series psi_{alpha,c,m} from the Gamma closed form."""
    if m < 0:
        raise ParameterError("m must be >= 0")
    s, c = params.s, params.c
    a = _series_shift(params, "scalar")
    ga = gamma(a)
    coefs = tuple(
        c**k * ga / (s ** (2 * k) * math.factorial(k) * gamma(a + k)) for k in range(m + 1)
    )
    return PowerSeriesRadial(s, coefs, "scalar")


def psi_tilde_coefficients(params: OperatorParams, m: int) -> PowerSeriesRadial:
    """Coefficients of the vector-factor series psi-tilde_{alpha,c,m}."""
    if m < 0:
        raise ParameterError("m must be >= 0")
    s, c = params.s, params.c
    a = _series_shift(params, "vector")
    ga = gamma(a)
    coefs = tuple(
        c**k * ga / (s ** (2 * k) * math.factorial(k) * gamma(a + k)) for k in range(m + 1)
    )
    return PowerSeriesRadial(s, coefs, "vector")


def recursion_coefficients(params: OperatorParams, m: int, kind: str = "scalar") -> tuple:
    """Same coefficients from the ratio recursion gamma_{k+1} = gamma_k c / beta_{k+1}.

    beta_k = s k (N - 2 + s k) for the scalar series, s k (N + s k) for the vector
    one; these are the factors produced by the Laplacian acting on r^{sk} and
    x_j r^{sk}.
    """
    s, c, N = params.s, params.c, params.N
    offset = N - 2 if kind in ("scalar", "phi") else N
    coefs = [1.0]
    for k in range(1, m + 1):
        beta = s * k * (offset + s * k)
        coefs.append(coefs[-1] * c / beta)
    return tuple(coefs)


def choose_m(alpha: float, kind: Kind) -> int:
    """Smallest integer m making the residual power bounded at the origin.

    phi uses [alpha/(2-alpha), 2/(2-alpha)), phi_j uses
    [(alpha-1)/(2-alpha), 1/(2-alpha)); both intervals have length one.
    """
    if not (0.0 < alpha < 2.0):
        raise ParameterError("alpha must lie in (0, 2)")
    s = 2.0 - alpha
    if kind == "phi":
        lo, hi = alpha / s, 2.0 / s
    elif kind == "phi_j":
        lo, hi = (alpha - 1.0) / s, 1.0 / s
    else:
        raise ParameterError(f"unknown profile kind {kind!r}")
    m = max(0, math.ceil(lo - 1e-12))
    if not (m < hi):
        raise NumericalError(f"no integer in [{lo}, {hi})")
    return m


def residual_closed_form(params: OperatorParams, m: int, r, kind: Kind = "phi"):
    """Exact value of S applied to the pure (uncut) series.

    For ``kind="phi"`` this is (-Delta + c r^-alpha) psi_{alpha,c,m}(r).  For
    ``kind="phi_j"`` the image of x_j psi-tilde is x_j times a radial function;
    the radial factor C r^{(2-alpha)m - alpha} is returned.
    """
    s, c = params.s, params.c
    a = _series_shift(params, "scalar" if kind == "phi" else "vector")
    const = c ** (m + 1) * gamma(a) / (s ** (2 * m) * math.factorial(m) * gamma(a + m))
    r = np.asarray(r, dtype=float)
    return const * r ** (s * m - params.alpha)


def smoothstep(t, deriv: int = 0):
    """Quintic smoothstep on [0, 1]: 0 below, 1 above, C^2 at both ends."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    if deriv == 0:
        return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)
    if deriv == 1:
        return 30.0 * t * t * (1.0 - t) ** 2
    if deriv == 2:
        return 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
    raise ValueError("deriv must be 0, 1 or 2")


def cutoff(r, deriv: int = 0, inner: float = 1.0, outer: float = 2.0):
    """Radial cutoff eta: 1 on [0, inner], 0 on [outer, inf), C^2 in between."""
    r = np.asarray(r, dtype=float)
    width = outer - inner
    t = (r - inner) / width
    inside = (r > inner) & (r < outer)
    if deriv == 0:
        return 1.0 - smoothstep(t)
    return np.where(inside, -smoothstep(t, deriv) / width**deriv, 0.0)


@dataclass(frozen=True)
class CorrectionProfile:
    """Series glued to its far-field value on [r1, r2].

    For ``kind="phi"`` the profile is radial: psi on [0, r1], 1 beyond r2.
    For ``kind="phi_j"`` the function is x_j * g(r) where g = psi-tilde on
    [0, r1] and g = 0 beyond r2; ``radial`` returns g and its derivatives.
    """

    params: OperatorParams
    series: PowerSeriesRadial
    r1: float
    r2: float
    kind: Kind = "phi"
    j: int | None = None
    requested_r1: float | None = field(default=None, compare=False)

    @property
    def m(self) -> int:
        return self.series.m

    def radial(self, r, deriv: int = 0):
        r = np.asarray(r, dtype=float)
        far = 1.0 if self.kind == "phi" else 0.0
        w = self.r2 - self.r1
        t = (r - self.r1) / w
        S0 = smoothstep(t)
        psi0 = self.series(r)
        if deriv == 0:
            out = psi0 + S0 * (far - psi0)
        else:
            S1 = smoothstep(t, 1) / w
            psi1 = self.series(r, 1)
            if deriv == 1:
                out = psi1 * (1.0 - S0) + S1 * (far - psi0)
            elif deriv == 2:
                S2 = smoothstep(t, 2) / w**2
                psi2 = self.series(r, 2)
                out = psi2 * (1.0 - S0) - 2.0 * psi1 * S1 + S2 * (far - psi0)
            else:
                raise ValueError("deriv must be 0, 1 or 2")
        beyond = r >= self.r2
        if np.any(beyond):
            out = np.where(beyond, far if deriv == 0 else 0.0, out)
        return out

    def laplacian_radial(self, r):
        """Radial factor of Delta applied to the profile."""
        r = np.asarray(r, dtype=float)
        shift = self.params.N - 1 if self.kind == "phi" else self.params.N + 1
        return self.radial(r, 2) + shift / r * self.radial(r, 1)

    def apply_S_radial(self, r):
        """Radial factor of (-Delta + c r^-alpha) applied to the profile.

        On the pure-series patch the closed-form residual is used, which avoids
        the cancellation between the Laplacian and the singular potential.
        """
        r = np.asarray(r, dtype=float)
        direct = -self.laplacian_radial(r) + self.params.c * r ** (-self.params.alpha) * self.radial(r)
        patch = residual_closed_form(self.params, self.m, r, self.kind)
        return np.where(r <= self.r1, patch, direct)

    def evaluate(self, x):
        """Evaluate at Cartesian points ``x`` of shape (..., N)."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        g = self.radial(r)
        if self.kind == "phi":
            return g
        return x[..., self.j - 1] * g

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "N": self.params.N,
            "alpha": self.params.alpha,
            "c": self.params.c,
            "m": self.m,
            "coefficients": list(self.series.coefficients),
            "r1": self.r1,
            "r2": self.r2,
            **({"j": self.j} if self.kind == "phi_j" else {}),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "CorrectionProfile":
        params = OperatorParams(N=d["N"], alpha=d["alpha"], c=d["c"])
        kind = d["kind"]
        series = PowerSeriesRadial(
            2.0 - params.alpha, tuple(d["coefficients"]), "scalar" if kind == "phi" else "vector"
        )
        return cls(params, series, d["r1"], d["r2"], kind, d.get("j"))


def build_profile(
    params: OperatorParams,
    kind: Kind = "phi",
    r1: float = 0.5,
    r2: float = 1.0,
    j: int = 1,
    m: int | None = None,
    max_halvings: int = 60,
) -> CorrectionProfile:
    """Construct phi (radial, values in [1/2, 2]) or phi_j.

    If the raw series leaves [1/2, 2] on [0, r2] (large |c|), both radii are
    halved together until it does not; the effective radii are stored on the
    profile and the requested r1 is kept in ``requested_r1``.
    """
    if not (0.0 < r1 < r2):
        raise ParameterError("need 0 < r1 < r2")
    if m is None:
        m = choose_m(params.alpha, kind)
    if kind == "phi":
        series = psi_coefficients(params, m)
    elif kind == "phi_j":
        if not (1 <= j <= params.N):
            raise ParameterError(f"phi_j index j must lie in 1..{params.N}")
        series = psi_tilde_coefficients(params, m)
    else:
        raise ParameterError(f"unknown profile kind {kind!r}")
    requested = r1
    if kind == "phi":
        ratio = r2 / r1
        for _ in range(max_halvings + 1):
            rs = np.linspace(0.0, r2, 4001)
            vals = series(rs)
            if vals.min() >= 0.5 and vals.max() <= 2.0:
                break
            r1 *= 0.5
            r2 = r1 * ratio
        else:
            raise NumericalError("could not shrink the patch radius so that 1/2 <= phi <= 2")
    return CorrectionProfile(params, series, r1, r2, kind, j if kind == "phi_j" else None, requested)


def hessian_norm_truncated(profile: CorrectionProfile, p: float, eps: float, outer: float = 1.0,
                           n_per_octave: int = 64) -> float:
    """Truncated integral of |D^2 phi|^p over eps < |x| < outer (radial phi only).

    |D^2 u|^2 = u''^2 + (N-1)(u'/r)^2 for radial u.
    """
    if profile.kind != "phi":
        raise ParameterError("hessian_norm_truncated expects a radial profile")
    N = profile.params.N
    octaves = max(1.0, math.log2(outer / eps))
    n = int(n_per_octave * octaves) + 1
    t, wt = _gauss_legendre_log(math.log(eps), math.log(outer), n)
    r = np.exp(t)
    h2 = profile.radial(r, 2) ** 2 + (N - 1) * (profile.radial(r, 1) / r) ** 2
    area = 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)
    return float(area * np.sum(wt * h2 ** (p / 2) * r**N))


def _gauss_legendre_log(t0: float, t1: float, panels: int, order: int = 8):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(t0, t1, panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    t = (0.5 * (b - a) * x + 0.5 * (b + a)).ravel()
    wt = (0.5 * (b - a) * w).ravel()
    return t, wt
