"""Mode-wise time evolution of e^{-tS}, positivity and domination checks,
growth-rate fits, and the gauge (similarity) identity.

Each spherical-harmonic mode evolves under its own tridiagonal operator, so the
evolution never couples modes.  Implicit Euler gives an M-matrix step for c >= 0
(nonnegative inverse, dominated by the heat step); Crank-Nicolson with two
implicit-Euler half-steps at start-up is the default for accuracy.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from .harmonics import (ModeIndex, abs_power_integral, harmonic_eval, sphere_area,
                        sphere_quadrature)
from .params import NumericalError, OperatorParams, ParameterError
from .radial_operator import (DiscreteModeOperator, ModeField, RadialGrid, build_mode_operator,
                     derivative, lp_norm, resolvent_solve)
from .special_functions import CorrectionProfile, build_profile

SCHEMES = ("implicit-euler", "crank-nicolson")


@dataclass(frozen=True)
class EvolutionSpec:
    params: OperatorParams
    modes: tuple
    t_final: float
    dt: float
    scheme: str = "crank-nicolson"
    grid: RadialGrid = field(default_factory=RadialGrid)
    save_every: int = 1

    def __post_init__(self):
        if not self.t_final > 0 or not self.dt > 0:
            raise ParameterError("t_final and dt must be positive")
        if self.dt > self.t_final:
            raise ParameterError("dt must not exceed t_final")
        if self.scheme not in SCHEMES:
            raise ParameterError(f"scheme must be one of {SCHEMES}")
        if self.save_every < 1:
            raise ParameterError("save_every must be >= 1")
        object.__setattr__(self, "modes", tuple(
            m if isinstance(m, ModeIndex) else ModeIndex(*m) if isinstance(m, tuple) else ModeIndex(m)
            for m in self.modes))

    @property
    def steps(self) -> int:
        return max(1, int(math.ceil(self.t_final / self.dt - 1e-9)))


@dataclass
class Trajectory:
    """Time samples of every evolved mode; ``values[mode]`` has shape (T, M)."""

    params: OperatorParams
    grid: RadialGrid
    times: np.ndarray
    values: dict

    @property
    def modes(self) -> list:
        return sorted(self.values)

    def field_at(self, index: int, mode: ModeIndex) -> ModeField:
        return ModeField(mode, self.grid, self.values[mode][index], self.params.N)

    def norm(self, index: int, p: float, quad_order: int | None = None) -> float:
        """L^p norm of the full solution at sample ``index``."""
        modes = self.modes
        if len(modes) == 1:
            return lp_norm(self.field_at(index, modes[0]), p)
        if p == 2.0:
            return math.sqrt(sum(lp_norm(self.field_at(index, m), 2.0) ** 2 for m in modes))
        full, quad = reconstruct_full(self, index, quad_order)
        r = self.grid.r
        radial = np.abs(full) ** p @ quad.weights
        return float(np.trapezoid(radial * r ** (self.params.N - 1), r) ** (1.0 / p))

    def norm_track(self, p: float) -> np.ndarray:
        return np.array([self.norm(i, p) for i in range(len(self.times))])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "degree", "member", "r", "value"])
        r = self.grid.r
        for i, t in enumerate(self.times):
            for m in self.modes:
                for rr, v in zip(r, self.values[m][i]):
                    w.writerow([format(t, ".17g"), m.degree, m.member,
                                format(rr, ".17g"), format(v, ".17g")])
        return buf.getvalue()

    def norm_csv(self, ps) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "p", "norm"])
        for p in ps:
            for t, nv in zip(self.times, self.norm_track(p)):
                w.writerow([format(t, ".17g"), format(p, ".17g"), format(nv, ".17g")])
        return buf.getvalue()


def reconstruct_full(traj: Trajectory, index: int, quad_order: int | None = None):
    """Solution at sample ``index`` on the (r, sphere-quadrature) product grid."""
    N = traj.params.N
    modes = traj.modes
    degmax = max(m.degree for m in modes)
    if N > 3:
        if degmax > 1:
            raise ParameterError("full reconstruction for N >= 4 supports degrees 0 and 1 only")
        raise ParameterError("full-grid reconstruction requires N = 2 or 3")
    quad = sphere_quadrature(N, quad_order or max(8, 4 * degmax + 4))
    out = np.zeros((traj.grid.M, len(quad.weights)))
    for m in modes:
        out += np.outer(traj.values[m][index], harmonic_eval(N, m, quad.nodes))
    return out, quad


class _Stepper:
    """Factorized (I + theta dt A) with the explicit part of the theta scheme."""

    def __init__(self, op: DiscreteModeOperator, dt: float, theta: float):
        self.op, self.dt, self.theta = op, dt, theta
        dl = theta * dt * op.sub
        du = theta * dt * op.sup
        d = 1.0 + theta * dt * op.diag
        *self.lu, info = lapack.dgttrf(dl, d, du)
        if info != 0:
            raise NumericalError(f"time-step matrix singular (pivot {info})")

    def __call__(self, u):
        rhs = u if self.theta == 1.0 else u - (1.0 - self.theta) * self.dt * self.op.matvec(u)
        x, info = lapack.dgttrs(*self.lu, rhs)
        if info != 0 or not np.all(np.isfinite(x)):
            raise NumericalError("time step produced non-finite values")
        return x


def _evolve_mode(spec: EvolutionSpec, mode: ModeIndex, u0: np.ndarray):
    op = build_mode_operator(spec.params, mode.degree, spec.grid)
    n = spec.steps
    dt = spec.t_final / n
    saved_t = [0.0]
    saved = [u0.copy()]
    u = u0.copy()
    if spec.scheme == "implicit-euler":
        main = _Stepper(op, dt, 1.0)
        start = None
    else:
        main = _Stepper(op, dt, 0.5)
        start = _Stepper(op, 0.5 * dt, 1.0)
    for k in range(1, n + 1):
        try:
            if start is not None and k == 1:
                u = start(start(u))
            else:
                u = main(u)
        except NumericalError as exc:
            raise NumericalError(f"mode {mode.degree}/{mode.member}, t={k * dt:.6g}: {exc}") from exc
        if k % spec.save_every == 0 or k == n:
            saved_t.append(k * dt)
            saved.append(u.copy())
    return np.array(saved_t), np.array(saved)


def evolve(spec: EvolutionSpec, initial, jobs: int = 1) -> Trajectory:
    """Advance each mode field in ``initial`` to ``spec.t_final``.

    Modes are independent; with ``jobs > 1`` they run in a thread pool and are
    merged in mode order, so results do not depend on scheduling.
    """
    initial = list(initial)
    if not initial:
        raise ParameterError("no initial fields")
    for f in initial:
        if f.grid != spec.grid:
            raise ParameterError("initial fields must live on the evolution grid")
    by_mode = {}
    for f in initial:
        by_mode[f.mode] = by_mode.get(f.mode, 0.0) + f.values
    modes = sorted(by_mode)
    work = [(m, np.asarray(by_mode[m], dtype=float)) for m in modes]
    if jobs > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(lambda mw: _evolve_mode(spec, *mw), work))
    else:
        results = [_evolve_mode(spec, m, u) for m, u in work]
    times = results[0][0]
    return Trajectory(spec.params, spec.grid, times, {m: res[1] for m, res in zip(modes, results)})


@dataclass
class CheckReport:
    name: str
    status: str  # "pass" | "fail" | "skipped"
    value: float
    threshold: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "value": self.value,
                "threshold": self.threshold, "detail": self.detail}


def _full_samples(traj: Trajectory):
    """Node values of the full solution at every time sample (T, M, Q)."""
    modes = traj.modes
    if all(m.degree == 0 for m in modes):
        P0 = 1.0 / math.sqrt(sphere_area(traj.params.N))
        return sum(traj.values[m] for m in modes)[..., None] * P0
    return np.array([reconstruct_full(traj, i)[0] for i in range(len(traj.times))])


def positivity_check(traj: Trajectory, rel_tol: float = 1e-8) -> CheckReport:
    """min over nodes and times of the reconstructed solution."""
    full = _full_samples(traj)
    init_max = float(np.max(full[0])) if full.size else 0.0
    init_min = float(np.min(full[0])) if full.size else 0.0
    if init_min < -1e-14 * max(abs(init_max), abs(init_min), 1e-300):
        return CheckReport("positivity", "skipped", init_min, 0.0,
                           "initial data changes sign; positivity is only meaningful for u >= 0")
    mn = float(np.min(full))
    thr = -rel_tol * init_max
    return CheckReport("positivity", "pass" if mn >= thr else "fail", mn, thr)


def domination_check(params: OperatorParams, initial, t: float, grid: RadialGrid | None = None,
                     dt: float | None = None, scheme: str = "implicit-euler",
                     tol: float = 1e-8) -> CheckReport:
    """0 <= e^{-tS} f <= e^{t Laplace} f node-wise on a common grid."""
    if params.c < 0:
        raise ParameterError("domination by the heat semigroup requires c >= 0")
    initial = list(initial)
    grid = grid or initial[0].grid
    dt = dt or t / 50.0
    modes = tuple(f.mode for f in initial)
    u = evolve(EvolutionSpec(params, modes, t, dt, scheme, grid), initial)
    h = evolve(EvolutionSpec(params.replace(c=0.0), modes, t, dt, scheme, grid), initial)
    fu, fh = _full_samples(u), _full_samples(h)
    scale = max(float(np.max(np.abs(fu[0]))), 1e-300)
    low = float(np.min(fu)) / scale
    excess = float(np.max(fu - fh)) / scale
    worst = max(-low, excess)
    ok = low >= -tol and excess <= tol
    return CheckReport("domination", "pass" if ok else "fail", worst, tol,
                       f"min={low:.3e} max(u - heat)={excess:.3e} (relative to max f)")


@dataclass
class GrowthFit:
    omega: float
    residual: float
    times: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)
    p: float = 2.0


def growth_rate_fit(traj: Trajectory, p: float, t_min: float | None = None) -> GrowthFit:
    """Least-squares slope of log ||u(t)||_p against t.

    By default only the second half of the trajectory is used, where the lowest
    mode of the spectrum dominates.
    """
    times = traj.times
    if len(times) < 3:
        raise ParameterError("need at least 3 time samples")
    t_min = 0.5 * times[-1] if t_min is None else t_min
    sel = times >= t_min - 1e-12
    if sel.sum() < 3:
        sel = np.ones_like(times, dtype=bool)
    idx = np.nonzero(sel)[0]
    norms = np.array([traj.norm(i, p) for i in idx])
    if np.any(norms <= 0) or not np.all(np.isfinite(norms)):
        raise NumericalError("vanishing or non-finite norms in growth fit")
    t = times[idx]
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(norms), rcond=None)
    res = float(np.sqrt(np.mean((A @ coef - np.log(norms)) ** 2)))
    return GrowthFit(float(coef[0]), res, t, norms, p)


@dataclass
class GaugeOperator:
    """Drift b = -2 phi'/phi and potential V = S phi / phi of T^{-1} S T.

    With T u = phi u:  T^{-1} S T u = -Laplace u + b . grad u + V u.
    """

    profile: CorrectionProfile
    grid: RadialGrid
    drift: np.ndarray
    potential: np.ndarray

    def rhs(self, f: ModeField) -> np.ndarray:
        """Drift-potential side on a mode field (the Laplacian via the c = 0 operator)."""
        op0 = build_mode_operator(self.profile.params.replace(c=0.0), f.mode.degree, self.grid)
        return op0.matvec(f.values) + self.drift * derivative(f.values, self.grid.r) \
            + self.potential * f.values


def build_gauge_operator(params: OperatorParams, grid: RadialGrid,
                         profile: CorrectionProfile | None = None) -> GaugeOperator:
    profile = profile or build_profile(params, "phi")
    r = grid.r
    phi = profile.radial(r)
    drift = -2.0 * profile.radial(r, 1) / phi
    V = profile.apply_S_radial(r) / phi
    if not np.all(np.isfinite(V)):
        raise NumericalError("gauge potential is not finite on the grid")
    return GaugeOperator(profile, grid, drift, V)


def gauge_identity_check(params: OperatorParams, u, grid: RadialGrid | None = None,
                         profile: CorrectionProfile | None = None) -> float:
    """max |S(phi u)/phi - (-Laplace u - 2 grad(phi)/phi . grad u + V u)| / max |S(phi u)/phi|.

    ``u`` is a ModeField (or a dict/list of them) supported in an annulus a <= r <= b.
    """
    fields = list(u.values()) if isinstance(u, dict) else list(u) if isinstance(u, (list, tuple)) else [u]
    grid = grid or fields[0].grid
    g = build_gauge_operator(params, grid, profile)
    phi = g.profile.radial(grid.r)
    worst_num = worst_den = 0.0
    for f in fields:
        if f.grid != grid:
            raise ParameterError("grid mismatch")
        v = f.values
        amp = np.max(np.abs(v))
        if amp == 0:
            continue
        edge = 1e-14 * amp
        if np.any(np.abs(v[:2]) > edge) or np.any(np.abs(v[-2:]) > edge):
            raise ParameterError("test function support must stay away from r = 0 and R_max")
        op = build_mode_operator(params, f.mode.degree, grid)
        lhs = op.matvec(phi * v) / phi
        rhs = g.rhs(f)
        worst_num = max(worst_num, float(np.max(np.abs(lhs - rhs))))
        worst_den = max(worst_den, float(np.max(np.abs(lhs))))
    if worst_den == 0:
        return 0.0
    return worst_num / worst_den


@dataclass
class ConsistencyReport:
    identical_fields: bool
    norms: dict
    resolvent_vs_stepping: float
    resolvent_vs_cn: float

    def to_dict(self) -> dict:
        return {"identical_fields": self.identical_fields,
                "norms": {str(k): v for k, v in self.norms.items()},
                "resolvent_vs_stepping": self.resolvent_vs_stepping,
                "resolvent_vs_cn": self.resolvent_vs_cn}


def resolvent_power(op: DiscreteModeOperator, f: ModeField, t: float, n: int) -> ModeField:
    """(I + (t/n) A)^{-n} f through n resolvent solves at lambda = n/t."""
    lam = n / t
    u = f
    for _ in range(n):
        u = resolvent_solve(op, lam, u)
        u = u.copy_with(lam * u.values)
    return u


def consistency_check(params: OperatorParams, initial: ModeField, t: float,
                      ps=(1.5, 2.0, 4.0), steps: int = 20) -> ConsistencyReport:
    """One solve, several L^p norm tracks; plus the resolvent route for e^{-tS}."""
    grid = initial.grid
    spec = EvolutionSpec(params, (initial.mode,), t, t / steps, "implicit-euler", grid)
    traj = evolve(spec, [initial])
    snaps = {p: traj.values[initial.mode][-1] for p in ps}
    first = snaps[ps[0]]
    identical = all(np.array_equal(first, v) for v in snaps.values())
    norms = {p: traj.norm(len(traj.times) - 1, p) for p in ps}
    op = build_mode_operator(params, initial.mode.degree, grid)
    rp = resolvent_power(op, initial, t, steps).values
    scale = max(np.max(np.abs(first)), 1e-300)
    d_ie = float(np.max(np.abs(rp - first)) / scale)
    cn = evolve(EvolutionSpec(params, (initial.mode,), t, t / steps, "crank-nicolson", grid),
                [initial]).values[initial.mode][-1]
    d_cn = float(np.max(np.abs(rp - cn)) / scale)
    return ConsistencyReport(identical, norms, d_ie, d_cn)


def heat_gaussian(r, t: float, N: int, sigma: float = 1.0):
    """Exact e^{t Laplace} of exp(-|x|^2/sigma) on R^N."""
    r = np.asarray(r, dtype=float)
    s = sigma + 4.0 * t
    return (sigma / s) ** (N / 2.0) * np.exp(-r * r / s)
