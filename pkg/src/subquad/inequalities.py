"""Hardy and Rellich type inequalities on closed-form trial functions.

Trial functions are u(x) = f(r) P(w) with f = exp(g) given analytically
together with g' and g''.  All integrals are taken in t = log r with
composite Gauss-Legendre rules and summed in the log domain, so very singular
or very flat profiles do not overflow.  A dilation u(lam x) moves the whole
integration window with the function; ratios that are invariant in theory are
therefore invariant as computed, up to round-off.

Mode-weighted members carry the solid-harmonic factor: for degree n the
radial coefficient is r^n h(r), so u = h(r) |x|^n P_n(x/|x|).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .harmonics import ModeIndex, abs_power_integral, eigenvalue, sphere_area, zonal_rule
from .params import OperatorParams, ParameterError
from .special_functions import _gauss_legendre_log, cutoff


@dataclass(frozen=True)
class TrialFunction:
    """u(x) = exp(g(r)) P_mode(w), dilated as u(dilation * x)."""

    N: int
    mode: ModeIndex
    g: Callable
    h1: Callable  # r g'(r)
    h2: Callable  # r^2 g''(r)
    lo: float
    hi: float
    label: str = "trial"
    leading_power: float = 0.0  # f ~ r^leading_power near 0
    dilation: float = 1.0
    panels_per_unit: int = 3

    def dilate(self, lam: float) -> "TrialFunction":
        if not lam > 0:
            raise ParameterError("dilation must be positive")
        return replace(self, dilation=self.dilation * lam)

    def with_mode(self, n: int, member: int = 0) -> "TrialFunction":
        """Multiply the profile by r^n and attach the degree-n harmonic."""
        g, h1, h2 = self.g, self.h1, self.h2
        return replace(
            self, mode=ModeIndex(n, member),
            g=lambda r: g(r) + n * np.log(r),
            h1=lambda r: h1(r) + n,
            h2=lambda r: h2(r) - n,
            leading_power=self.leading_power + n,
            label=f"{self.label}*r^{n}P_{n}",
        )

    @property
    def lam_n(self) -> int:
        return eigenvalue(self.N, self.mode.degree)

    def values(self, r):
        """(G, r G', r^2 G'') of the dilated log-profile at radii r.

        The scaled derivatives are dilation-covariant: r G'(r) = h1(lam r).
        """
        s = self.dilation * np.asarray(r, dtype=float)
        return self.g(s), self.h1(s), self.h2(s)

    def window(self, inner=None, outer=None, exponent=None):
        """Log-radius integration interval in actual coordinates."""
        lo = self.lo
        if exponent is not None and exponent > 0:
            lo = min(lo, math.exp(-min(700.0, max(120.0, 40.0 / exponent))))
        lo = lo / self.dilation if inner is None else inner
        hi = self.hi / self.dilation if outer is None else outer
        if not hi > lo > 0:
            raise ParameterError("empty integration window")
        return math.log(lo), math.log(hi)

    def nodes(self, inner=None, outer=None, exponent=None):
        t0, t1 = self.window(inner, outer, exponent)
        panels = max(8, int(math.ceil((t1 - t0) * self.panels_per_unit)))
        t, wt = _gauss_legendre_log(t0, t1, panels)
        return t, wt


# ----------------------------------------------------------------------------
# families

def gaussian_bump(N: int, width: float = 1.0, center: float = 0.0, n: int = 0) -> TrialFunction:
    w2 = width * width
    u = TrialFunction(
        N, ModeIndex(0),
        g=lambda r: -((r - center) ** 2) / w2,
        h1=lambda r: -2.0 * r * (r - center) / w2,
        h2=lambda r: -2.0 * np.asarray(r, dtype=float) ** 2 / w2,
        lo=1e-40 * width, hi=center + 14.0 * width,
        label=f"gauss(w={width:g},c={center:g})",
    )
    return u.with_mode(n) if n else u


def exponential(N: int, rate: float = 1.0, n: int = 0) -> TrialFunction:
    """exp(-rate r) (times r^n P_n)."""
    u = TrialFunction(
        N, ModeIndex(0),
        g=lambda r: -rate * np.asarray(r, dtype=float),
        h1=lambda r: -rate * np.asarray(r, dtype=float),
        h2=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        lo=1e-40 / rate, hi=200.0 / rate,
        label=f"exp(rate={rate:g})",
    )
    return u.with_mode(n) if n else u


def power_cutoff(N: int, beta: float, rho: float = 0.0, delta: float = 2.0,
                 n: int = 0) -> TrialFunction:
    """(r^2 + rho^2)^(-beta/2) (1 + r^2)^(-delta/2): a power profile, smoothed at the
    origin by rho and decaying like r^-(beta+delta) at infinity."""
    lrho = 2.0 * math.log(rho) if rho > 0 else -math.inf

    def _q(r):  # (rho/r)^2, computed without forming r^2
        return np.exp(lrho - 2.0 * np.log(r)) if rho > 0 else np.zeros_like(r)

    def g(r):
        r = np.asarray(r, dtype=float)
        return -0.5 * beta * np.logaddexp(2.0 * np.log(r), lrho) - 0.5 * delta * np.log1p(r * r)

    def h1(r):
        r = np.asarray(r, dtype=float)
        r2 = r * r
        return -beta / (1.0 + _q(r)) - delta * r2 / (1.0 + r2)

    def h2(r):
        r = np.asarray(r, dtype=float)
        q, r2 = _q(r), r * r
        return -beta * (q - 1.0) / (1.0 + q) ** 2 - delta * r2 * (1.0 - r2) / (1.0 + r2) ** 2

    decay = max(beta + delta, 1e-3)
    u = TrialFunction(N, ModeIndex(0), g, h1, h2, lo=1e-40, hi=math.exp(min(150.0, max(40.0, 200.0 / decay))),
                      label=f"power(beta={beta:g},rho={rho:g},delta={delta:g})",
                      leading_power=0.0 if rho > 0 else -beta)
    return u.with_mode(n) if n else u


def hardy_extremal(N: int, p: float, eps: float, delta: float = 2.0) -> TrialFunction:
    """r^{-(N-p)/p + eps} near 0: approaches equality in the Hardy inequality."""
    return replace(power_cutoff(N, (N - p) / p - eps, 0.0, delta), label=f"hardy-eps({eps:g})")


def rellich_extremal(N: int, p: float, eps: float, delta: float = 2.0) -> TrialFunction:
    """r^{-(N-2p)/p + eps} near 0: approaches equality in the Rellich inequality."""
    return replace(power_cutoff(N, (N - 2 * p) / p - eps, 0.0, delta), label=f"rellich-eps({eps:g})")


# ----------------------------------------------------------------------------
# log-domain norms

def _exponent(u: TrialFunction, p: float, a: float, k: int) -> float:
    """Small-r power of |r^{-a} D^k u|^p r^N in t, assuming the generic worst case."""
    return u.N + (u.leading_power - a - k) * p


def _log_norm_p(u, p, a=0.0, inner=None, outer=None) -> float:
    """log of || |x|^-a u ||_p^p over inner < |x| < outer."""
    t, wt = u.nodes(inner, outer, _exponent(u, p, a, 0))
    r = np.exp(t)
    G, _, _ = u.values(r)
    logs = p * G - a * p * t + u.N * t
    return float(logsumexp(logs, b=wt)) + math.log(abs_power_integral(u.N, u.mode, p))


def _log_grad_p(u, p, inner=None, outer=None, zonal_order: int = 48) -> float:
    """log of || grad u ||_p^p."""
    t, wt = u.nodes(inner, outer, _exponent(u, p, 0.0, 1))
    r = np.exp(t)
    G, H1, _ = u.values(r)
    n = u.mode.degree
    base = p * G + (u.N - p) * t  # |grad u| carries a factor 1/r
    if p == 2.0:
        with np.errstate(divide="ignore"):  # a constant profile has zero gradient
            return float(logsumexp(base + np.log(H1**2 + u.lam_n), b=wt))
    if n == 0:
        with np.errstate(divide="ignore"):
            lg = p * np.log(np.abs(H1))
        return float(logsumexp(base + lg, b=wt)) + math.log(abs_power_integral(u.N, u.mode, p))
    if n == 1:
        tau, wtau = zonal_rule(u.N, zonal_order)
        kappa2 = u.N / sphere_area(u.N)
        inner_sum = ((H1[:, None] ** 2) * tau**2 + (1.0 - tau**2)) ** (p / 2.0) @ wtau
        return float(logsumexp(base + np.log(inner_sum), b=wt)) + 0.5 * p * math.log(kappa2)
    raise NotImplementedError("gradient L^p norms for p != 2 are available for degrees 0 and 1")


def _laplacian_factor(u, H1, H2):
    """r^2 Laplace(f P) / (f P)."""
    return H2 + H1**2 + (u.N - 1) * H1 - u.lam_n


def _log_lap_p(u, p, inner=None, outer=None) -> float:
    t, wt = u.nodes(inner, outer, _exponent(u, p, 0.0, 2))
    r = np.exp(t)
    G, H1, H2 = u.values(r)
    with np.errstate(divide="ignore"):
        lg = p * np.log(np.abs(_laplacian_factor(u, H1, H2)))
    return float(logsumexp(p * G + (u.N - 2 * p) * t + lg, b=wt)) + math.log(abs_power_integral(u.N, u.mode, p))


def norm(u: TrialFunction, p: float, a: float = 0.0, inner=None, outer=None) -> float:
    """|| |x|^-a u ||_{L^p(inner < |x| < outer)}."""
    return math.exp(_log_norm_p(u, p, a, inner, outer) / p)


def gradient_norm(u: TrialFunction, p: float, inner=None, outer=None) -> float:
    return math.exp(_log_grad_p(u, p, inner, outer) / p)


def laplacian_norm(u: TrialFunction, p: float, inner=None, outer=None) -> float:
    return math.exp(_log_lap_p(u, p, inner, outer) / p)


def hardy_constant(N: int, p: float) -> float:
    return p / (N - p)


def rellich_constant(N: int, p: float) -> float:
    return p * p / (N * (p - 1) * (N - 2 * p))


def hardy_ratio(u: TrialFunction, p: float, inner=None, outer=None) -> float:
    """||u/|x| ||_p / ||grad u||_p."""
    lg = _log_grad_p(u, p, inner, outer)
    if not math.isfinite(lg):
        raise ParameterError("vanishing gradient norm")
    return math.exp((_log_norm_p(u, p, 1.0, inner, outer) - lg) / p)


def zero_mean_hardy_ratio(f: TrialFunction, n: int, p: float, inner=None, outer=None) -> float:
    """Hardy ratio of u = f(r) |x|^n P_n(x/|x|); requires n >= 1 (zero spherical mean)."""
    if n < 1:
        raise ParameterError("zero-mean members need n >= 1")
    if f.mode.degree != 0:
        raise ParameterError("pass the radial profile; the mode factor is added here")
    return hardy_ratio(f.with_mode(n), p, inner, outer)


def rellich_ratio(u: TrialFunction, p: float, inner=None, outer=None) -> float:
    """||u/|x|^2||_p / ||Laplace u||_p."""
    ll = _log_lap_p(u, p, inner, outer)
    if not math.isfinite(ll):
        raise ParameterError("vanishing Laplacian norm")
    return math.exp((_log_norm_p(u, p, 2.0, inner, outer) - ll) / p)


# ----------------------------------------------------------------------------
# multiplicative (interpolated) forms

@dataclass
class MultiplicativeReport:
    which: str
    p: float
    alpha: float
    constants: np.ndarray
    dilations: np.ndarray
    spread: float
    expected_finite: bool
    refinement: np.ndarray
    refinement_finite: bool

    @property
    def constant(self) -> float:
        return float(self.constants[len(self.constants) // 2])


def _multiplicative_constant(u, p, alpha, which, inner=None):
    lhs = _log_norm_p(u, p, alpha, inner)
    base = _log_norm_p(u, p, 0.0, inner)
    if which == "hardy":
        top = _log_grad_p(u, p, inner)
        theta = alpha
    else:
        top = _log_lap_p(u, p, inner)
        theta = alpha / 2.0
    return math.exp((lhs - (1.0 - theta) * base - theta * top) / p)


def multiplicative_check(u: TrialFunction, p: float, alpha: float, which: str = "hardy",
                         dilations=None, cutoffs=None, tol: float = 0.02) -> MultiplicativeReport:
    """Smallest C in ||u/|x|^a||_p <= C ||u||_p^{1-t} ||D u||_p^t over a dilation sweep.

    ``which="hardy"`` uses D = grad and t = alpha (0 <= alpha <= 1);
    ``which="rellich"`` uses D = Laplace and t = alpha/2 (0 <= alpha <= 2).
    The inner-cutoff refinement tells whether C is finite for this u.
    """
    if which not in ("hardy", "rellich"):
        raise ParameterError("which must be 'hardy' or 'rellich'")
    amax = 1.0 if which == "hardy" else 2.0
    if not 0 <= alpha <= amax:
        raise ParameterError(f"alpha must lie in [0, {amax:g}] for the {which} form")
    lams = 2.0 ** np.arange(-8, 9) if dilations is None else np.asarray(dilations, dtype=float)
    Cs = np.array([_multiplicative_constant(u.dilate(l), p, alpha, which) for l in lams])
    spread = float(np.max(np.abs(Cs - Cs[len(Cs) // 2])) / Cs[len(Cs) // 2])
    eps = 2.0 ** -np.arange(4, 21) if cutoffs is None else np.asarray(cutoffs, dtype=float)
    ref = np.array([_multiplicative_constant(u, p, alpha, which, inner=e) for e in eps])
    # finite iff the truncated constants settle (increments shrink geometrically)
    inc = np.diff(ref ** p)
    finite = bool(inc[-1] <= tol * max(ref[-1] ** p, 1e-300)) and \
        bool(abs(inc[-1]) < abs(inc[0]) * 0.5 or abs(inc[-1]) < 1e-12 * ref[-1] ** p)
    expected = alpha < u.N / p + u.mode.degree
    return MultiplicativeReport(which, p, alpha, Cs, lams, spread, expected, ref, finite)


# ----------------------------------------------------------------------------
# divergence witnesses

@dataclass
class WitnessSequence:
    params: OperatorParams
    n: int
    epsilons: np.ndarray
    norms: np.ndarray
    exponent: float
    diverges: bool
    logarithmic: bool

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epsilon", "truncated_norm"])
        for e, v in zip(self.epsilons, self.norms):
            w.writerow([format(e, ".17g"), format(v, ".17g")])
        return buf.getvalue()


def witness_function(N: int, n: int) -> TrialFunction:
    """r^n eta(r) P_n with eta a C^2 cutoff: 1 on [0, 1/2], 0 beyond 1."""
    def eta(r, d=0):
        return cutoff(r, d, inner=0.5, outer=1.0)

    def g(r):
        with np.errstate(divide="ignore"):
            return n * np.log(r) + np.log(eta(r))

    def h1(r):
        return n + r * eta(r, 1) / eta(r)

    def h2(r):
        e0, e1, e2 = eta(r), eta(r, 1), eta(r, 2)
        return -n + r * r * (e2 / e0 - (e1 / e0) ** 2)

    return TrialFunction(N, ModeIndex(n), g, h1, h2, lo=1e-40, hi=1.0,
                         label=f"witness(n={n})", leading_power=n)


def truncated_norm_sequence(params: OperatorParams, n: int, ks=range(4, 21),
                            tol: float = 0.02) -> WitnessSequence:
    """||r^-alpha u||_{L^p(eps < |x| < 1)} for eps = 2^-k, with fitted rate.

    The increments between consecutive cutoffs behave like 2^{-k q}, q =
    N + (n - alpha) p; their log2-ratio over p is the divergence exponent of
    the norm (positive: power divergence, ~0: logarithmic, negative: finite).
    """
    N, p, a = params.N, params.p, params.alpha
    u = witness_function(N, n)
    eps = 2.0 ** (-np.asarray(sorted(ks), dtype=float))  # decreasing
    edges = np.concatenate([[1.0], eps])
    # p-th powers over [eps_0, 1] and then over each octave [eps_{k+1}, eps_k]
    pieces = np.array([math.exp(_log_norm_p(u, p, a, inner=lo_, outer=hi_))
                       for hi_, lo_ in zip(edges[:-1], edges[1:])])
    norms = np.cumsum(pieces) ** (1.0 / p)
    octaves = pieces[1:]
    rates = np.log2(octaves[1:] / octaves[:-1]) / p
    exponent = float(np.median(rates))
    return WitnessSequence(params, n, eps, norms, exponent,
                           diverges=exponent > -tol, logarithmic=abs(exponent) <= tol)


def divergence_witness(params: OperatorParams, n: int, ks=range(4, 21)) -> WitnessSequence:
    """Diverging truncated norms of r^-alpha u for u ~ |x|^n P_n near 0.

    Rejects alpha < N/p + n, where the norms converge.
    """
    if params.alpha < params.N / params.p + n:
        raise ParameterError(
            f"alpha = {params.alpha:g} < N/p + n = {params.N / params.p + n:g}: no divergence expected")
    return truncated_norm_sequence(params, n, ks)


# ----------------------------------------------------------------------------
# quasi-accretivity

@dataclass
class QuasiAccretiveReport:
    lhs: float
    rhs: float
    C_used: float
    C_min: float
    gradient_term: float
    mass: float
    eps: float
    delta: float
    passed: bool

    def as_tuple(self):
        return self.lhs, self.rhs, self.C_used, self.passed


def proof_constant(N: int, p: float, alpha: float, eps: float) -> tuple[float, float]:
    """C_eps from the delta / eta splitting, minimized over delta.

    With K = p/(N - a), a_d = K d^{1-a/2}/2 and b_d = K d^{1-a}/2 the splitting gives
    X^2 (1 - a_d) <= (b_d eta^2 + a_d) B^2 + b_d eta^-2 A^2; fixing the B^2
    coefficient to eps leaves C = b_d^2 / ((1 - a_d)(eps (1 - a_d) - a_d)),
    admissible while a_d (1 + eps) < eps.  For alpha < 1 the case alpha + 1
    is used on the unit ball and the outside contributes 1.
    """
    if eps <= 0:
        raise ParameterError("eps must be positive")
    extra = 0.0
    if alpha < 1.0:
        alpha, extra = alpha + 1.0, 1.0
    K = p / (N - alpha)
    e1 = 1.0 - alpha / 2.0
    dmax = (2.0 * eps / (K * (1.0 + eps))) ** (1.0 / e1)

    def logC(ld):
        d = math.exp(ld)
        a = 0.5 * K * d**e1
        b = 0.5 * K * d ** (1.0 - alpha)
        den = (1.0 - a) * (eps * (1.0 - a) - a)
        if den <= 0 or a >= 1:
            return math.inf
        return 2.0 * math.log(b) - math.log(den)

    hi = math.log(dmax) - 1e-9
    res = minimize_scalar(logC, bounds=(hi - 80.0, hi), method="bounded",
                          options={"xatol": 1e-10})
    return math.exp(res.fun) + extra, math.exp(res.x)


def quasi_accretive_check(u: TrialFunction, p: float, alpha: float, eps: float) -> QuasiAccretiveReport:
    """int |u|^p/|x|^a <= eps int |grad u|^2 |u|^{p-2} + C_eps int |u|^p for radial u."""
    if u.mode.degree != 0:
        raise ParameterError("quasi-accretive check is implemented for radial members")
    t, wt = u.nodes(exponent=_exponent(u, p, alpha, 1))
    r = np.exp(t)
    G, H1, _ = u.values(r)
    ang = abs_power_integral(u.N, u.mode, p)
    base = p * G + u.N * t
    lhs = ang * math.exp(logsumexp(base - alpha * t, b=wt))
    with np.errstate(divide="ignore"):
        grad = ang * math.exp(logsumexp(base - 2.0 * t + 2.0 * np.log(np.abs(H1)), b=wt))
    mass = ang * math.exp(logsumexp(base, b=wt))
    C, delta = proof_constant(u.N, p, alpha, eps)
    rhs = eps * grad + C * mass
    cmin = max(0.0, (lhs - eps * grad) / mass)
    return QuasiAccretiveReport(lhs, rhs, C, cmin, grad, mass, eps, delta,
                                passed=lhs <= rhs * (1 + 1e-12))


# ----------------------------------------------------------------------------
# sweeps

def family_sweep(N: int, p: float, which: str = "hardy", members=None) -> list[dict]:
    """Ratios of many trial members against the sharp constant."""
    if members is None:
        members = default_members(N, p, which)
    bound = hardy_constant(N, p) if which == "hardy" else rellich_constant(N, p)
    fn = hardy_ratio if which == "hardy" else rellich_ratio
    rows = []
    for i, u in enumerate(members):
        ratio = fn(u, p)
        rows.append({"family": f"{i}:{u.label}", "N": N, "p": p, "alpha": 1.0 if which == "hardy" else 2.0,
                     "ratio": ratio, "bound": bound, "margin": bound - ratio})
    return rows


def default_members(N: int, p: float, which: str = "hardy") -> list[TrialFunction]:
    out = []
    for w in (0.25, 0.5, 1.0, 2.0, 4.0):
        for c in (0.0, 0.5, 1.0, 3.0):
            out.append(gaussian_bump(N, w, c))
    for rate in (0.5, 1.0, 2.0):
        out.append(exponential(N, rate, n=1 if which == "rellich" else 0))
    crit = (N - p) / p if which == "hardy" else (N - 2 * p) / p
    for frac in (0.1, 0.3, 0.5, 0.7, 0.9):
        beta = frac * crit
        for rho in (0.0, 0.1, 1.0):
            # total decay beta + delta must exceed crit, else u / |x|^k is not in L^p at infinity
            for excess in (0.5, 1.0, 3.0):
                out.append(power_cutoff(N, beta, rho, crit - beta + excess))
    for eps in (0.2, 0.1, 0.05):
        out.append(hardy_extremal(N, p, eps) if which == "hardy" else rellich_extremal(N, p, eps))
    return out


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["family", "N", "p", "alpha", "ratio", "bound", "margin"]
    w.writerow(cols)
    for row in rows:
        w.writerow([row[c] if isinstance(row[c], str) else format(row[c], ".17g") for c in cols])
    return buf.getvalue()
