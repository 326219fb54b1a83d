import math

import numpy as np
import pytest

from subquad.harmonics import ModeIndex, project_mode
from subquad.params import OperatorParams, ParameterError
from subquad.radial_operator import ModeField, RadialGrid
from subquad.semigroup import (EvolutionSpec, consistency_check, domination_check, evolve,
                               gauge_identity_check, growth_rate_fit, heat_gaussian,
                               positivity_check, reconstruct_full)
from subquad.special_functions import build_profile

GRID = RadialGrid(20.0, 600, 3.0)


def gauss(grid=GRID, n=0, width=1.0, N=3):
    return ModeField(ModeIndex(n), grid, grid.r**n * np.exp(-grid.r**2 / width), N)


def test_spec_validation():
    P = OperatorParams(3, 1.0, 1.0)
    for kw in ({"t_final": 0, "dt": 0.1}, {"t_final": 1, "dt": 2}, {"t_final": 1, "dt": 0.1, "scheme": "rk4"},
               {"t_final": 1, "dt": 0.1, "save_every": 0}):
        with pytest.raises(ParameterError):
            EvolutionSpec(P, (0,), **kw)
    assert EvolutionSpec(P, (0,), 1.0, 0.3).steps == 4


def test_zero_initial_stays_zero():
    P = OperatorParams(3, 1.0, -1.0)
    f = ModeField(ModeIndex(0), GRID, np.zeros(GRID.M), 3)
    traj = evolve(EvolutionSpec(P, (0,), 0.5, 0.05, grid=GRID), [f])
    assert not np.any(traj.values[ModeIndex(0)])
    rep = positivity_check(traj)
    assert rep.status == "pass" and rep.value == 0


@pytest.mark.parametrize("scheme", ["crank-nicolson", "implicit-euler"])
def test_heat_oracle(scheme):
    """c = 0 matches the exact heat evolution of a Gaussian."""
    P = OperatorParams(3, 1.0, 0.0)
    t = 0.5
    errs = []
    for M, dt in ((500, 0.02), (1000, 0.01), (2000, 0.005)):
        g = RadialGrid(15.0, M, 2.0)
        f = gauss(g)
        traj = evolve(EvolutionSpec(P, (0,), t, dt, scheme, g), [f])
        errs.append(np.max(np.abs(traj.values[ModeIndex(0)][-1] - heat_gaussian(g.r, t, 3))))
    order = math.log2(errs[1] / errs[2])
    assert order > (1.5 if scheme == "crank-nicolson" else 0.9)
    assert errs[-1] < (1e-4 if scheme == "crank-nicolson" else 3e-3)


def test_rannacher_start_handles_rough_data():
    P = OperatorParams(3, 1.5, 1.0)
    g = GRID
    rough = ModeField(ModeIndex(0), g, (g.r < 1.0).astype(float), 3)
    traj = evolve(EvolutionSpec(P, (0,), 0.2, 0.05, "crank-nicolson", g), [rough])
    assert positivity_check(traj).value > -1e-3


def test_unconditional_stability_dt_doubling():
    """Large steps stay bounded while dt * omega < 1; step-doubling differences shrink at the scheme order.

    For c < 0 the semigroup genuinely grows like e^{omega t}. Crank-Nicolson steps
    with dt * |lambda_min| > 2 amplify the negative part spuriously, so the large
    step is chosen below 1 / omega (omega ~ 1.4 for the strongly attractive case).
    """
    for a, c, big in ((1.0, -1.0, 1.0), (1.5, 2.0, 1.0), (0.5, -3.0, 0.4)):
        P = OperatorParams(3, a, c)
        f = gauss()
        u = {dt: evolve(EvolutionSpec(P, (0,), 2.0, dt, grid=GRID), [f]).values[ModeIndex(0)][-1]
             for dt in (0.025, 0.05, 0.1, big)}
        ref = np.max(np.abs(u[0.025]))
        assert np.all(np.isfinite(u[big])) and np.max(np.abs(u[big])) < 10 * max(ref, np.max(np.abs(f.values)))
        d_coarse = np.max(np.abs(u[0.1] - u[0.05]))
        d_fine = np.max(np.abs(u[0.05] - u[0.025]))
        assert d_coarse / d_fine > 2.5


@pytest.mark.parametrize("p", [1.5, 2.0, 4.0])
def test_norm_nonincreasing_for_c_nonnegative(p):
    P = OperatorParams(3, 1.0, 1.0)
    traj = evolve(EvolutionSpec(P, (0,), 1.0, 0.02, "implicit-euler", GRID), [gauss()])
    norms = traj.norm_track(p)
    assert np.all(np.diff(norms) <= 1e-8 * norms[:-1])


def test_positivity_examples():
    P = OperatorParams(3, 1.0, -1.0)
    traj = evolve(EvolutionSpec(P, (0,), 1.0, 0.05, "implicit-euler", GRID), [gauss()])
    rep = positivity_check(traj)
    assert rep.passed and rep.value >= -1e-8
    dip = evolve(EvolutionSpec(P, (1,), 0.2, 0.05, grid=GRID), [gauss(n=1)])
    assert positivity_check(dip).status == "skipped"


def test_domination_examples():
    f = [gauss()]
    rep0 = domination_check(OperatorParams(3, 1.0, 0.0), f, 0.5, dt=0.01)
    assert rep0.passed and rep0.value <= 1e-12
    rep = domination_check(OperatorParams(3, 1.0, 1.0), f, 0.5, dt=0.01)
    assert rep.passed
    zero = [ModeField(ModeIndex(0), GRID, np.zeros(GRID.M), 3)]
    assert domination_check(OperatorParams(3, 1.0, 1.0), zero, 0.5).passed
    with pytest.raises(ParameterError):
        domination_check(OperatorParams(3, 1.0, -1.0), f, 0.5)


def test_growth_rate_examples():
    g = RadialGrid(40.0, 1000, 3.0)
    heat = evolve(EvolutionSpec(OperatorParams(3, 1.0, 0.0), (0,), 4.0, 0.1, grid=g), [gauss(g)])
    for p in (1.5, 2.0, 4.0):
        assert growth_rate_fit(heat, p).omega <= 1e-6
    P = OperatorParams(3, 1.0, -1.0)
    tr = evolve(EvolutionSpec(P, (0,), 30.0, 0.1, grid=g), [gauss(g)])
    om = growth_rate_fit(tr, 2.0).omega
    assert om >= 0.25 - 1e-3
    scaled = evolve(EvolutionSpec(P, (0,), 30.0, 0.1, grid=g), [gauss(g).copy_with(7.5 * gauss(g).values)])
    assert growth_rate_fit(scaled, 2.0).omega == pytest.approx(om, rel=1e-10)


def test_mode_orthogonality_preserved():
    P = OperatorParams(3, 1.0, -1.0)
    f = [gauss(n=1), gauss(n=2)]
    traj = evolve(EvolutionSpec(P, (1, 2), 0.5, 0.05, grid=GRID), f, jobs=2)
    full, quad = reconstruct_full(traj, len(traj.times) - 1)
    assert np.max(np.abs(project_mode(full, quad, ModeIndex(3, 0)))) < 1e-12
    assert np.max(np.abs(project_mode(full, quad, ModeIndex(0)))) < 1e-12
    np.testing.assert_allclose(project_mode(full, quad, ModeIndex(1)), traj.values[ModeIndex(1)][-1],
                               atol=1e-12)


def test_jobs_do_not_change_results():
    P = OperatorParams(3, 1.0, -1.0)
    f = [gauss(n=0), gauss(n=1), gauss(n=2)]
    spec = EvolutionSpec(P, (0, 1, 2), 0.3, 0.05, grid=GRID)
    a, b = evolve(spec, f, jobs=1), evolve(spec, f, jobs=3)
    assert a.to_csv() == b.to_csv()


def test_trajectory_csv_format():
    P = OperatorParams(3, 1.0, 1.0)
    g = RadialGrid(5.0, 32, 2.0)
    traj = evolve(EvolutionSpec(P, (0,), 0.1, 0.05, grid=g), [gauss(g)])
    lines = traj.to_csv().split("\n")
    assert lines[0] == "t,degree,member,r,value"
    assert len(lines) == 1 + 3 * g.M + 1 and lines[-1] == ""
    assert traj.norm_csv([2.0]).startswith("t,p,norm\n")


def _annulus_field(grid, a, b, n=0):
    r = grid.r
    c = 0.5 * (a + b)
    w = 0.5 * (b - a)
    bump = np.where(np.abs(r - c) < w, np.cos(0.5 * np.pi * (r - c) / w) ** 4, 0.0)
    return ModeField(ModeIndex(n), grid, bump * r**n, 3)


def test_gauge_identity_trivial_region():
    P = OperatorParams(3, 1.0, 1.0)
    g = RadialGrid(10.0, 1000, 3.0)
    prof = build_profile(P, "phi")
    f = _annulus_field(g, prof.r2 * 1.2, prof.r2 * 3.0)
    assert gauge_identity_check(P, f, g, prof) <= 1e-12


@pytest.mark.parametrize("params", [OperatorParams(3, 1.0, 1.0), OperatorParams(3, 1.5, -1.0)])
def test_gauge_identity_second_order(params):
    prof = build_profile(params, "phi")
    a, b = prof.r1 / 8, 0.8 * prof.r1
    errs = []
    for M in (1000, 2000):
        g = RadialGrid(10.0, M, 3.0)
        errs.append(gauge_identity_check(params, [_annulus_field(g, a, b), _annulus_field(g, a, b, n=2)], g, prof))
    assert math.log2(errs[0] / errs[1]) >= 1.9


def test_gauge_identity_rejects_support_at_origin():
    P = OperatorParams(3, 1.0, 1.0)
    with pytest.raises(ParameterError):
        gauge_identity_check(P, gauss(), GRID)


def test_consistency_check():
    rep = consistency_check(OperatorParams(3, 1.0, 1.0), gauss(), 0.5, steps=20)
    assert rep.identical_fields
    assert rep.resolvent_vs_stepping < 1e-12
    assert rep.resolvent_vs_cn < 0.1
    finer = consistency_check(OperatorParams(3, 1.0, 1.0), gauss(), 0.5, steps=80)
    assert finer.resolvent_vs_cn < 0.3 * rep.resolvent_vs_cn
    assert set(rep.norms) == {1.5, 2.0, 4.0}
    assert rep.to_dict()["identical_fields"] is True
