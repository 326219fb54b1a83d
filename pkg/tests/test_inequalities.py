import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subquad.inequalities import (default_members, divergence_witness, exponential, family_sweep,
                                  gaussian_bump, hardy_constant, hardy_extremal, hardy_ratio,
                                  multiplicative_check, power_cutoff, proof_constant,
                                  quasi_accretive_check, rellich_constant, rellich_extremal,
                                  rellich_ratio, sweep_csv, truncated_norm_sequence,
                                  witness_function, zero_mean_hardy_ratio, norm)
from subquad.params import OperatorParams, ParameterError


def test_constants():
    assert hardy_constant(4, 2) == 1.0
    assert rellich_constant(5, 2) == pytest.approx(0.8)


def test_hardy_gaussian_below_constant():
    r = hardy_ratio(gaussian_bump(4, 1.0), 2)
    assert r <= 1.0
    # for e^{-r^2} in N = 4: ||u/r||^2 / ||grad u||^2 = 1/2 exactly
    assert r == pytest.approx(math.sqrt(0.5), rel=1e-12)


def test_hardy_near_extremal_family():
    vals = [hardy_ratio(hardy_extremal(4, 2, e), 2) for e in (0.2, 0.1, 0.05)]
    assert vals[0] < vals[1] < vals[2] <= 1.0
    assert vals[2] >= 0.95


def test_rellich_examples():
    assert rellich_ratio(gaussian_bump(5, 1.0), 2) <= 0.8
    vals = [rellich_ratio(rellich_extremal(5, 2, e), 2) for e in (0.2, 0.1, 0.05)]
    assert vals[0] < vals[1] < vals[2] <= 0.8
    assert vals[2] >= 0.72


@settings(max_examples=25, deadline=None)
@given(st.floats(-6, 6), st.sampled_from(["gauss", "exp", "power"]))
def test_ratios_dilation_invariant(log2lam, kind):
    lam = 2.0**log2lam
    u = {"gauss": gaussian_bump(4, 0.7, 0.5), "exp": exponential(4, 1.3, n=1),
         "power": power_cutoff(4, 0.4, 0.1, 2.0)}[kind]
    assert hardy_ratio(u.dilate(lam), 2) == pytest.approx(hardy_ratio(u, 2), rel=1e-10)
    v = u if kind != "power" else power_cutoff(5, 0.2, 0.1, 2.0)
    if kind == "gauss":
        v = gaussian_bump(5, 0.7, 0.5)
    assert rellich_ratio(v.dilate(lam), 2) == pytest.approx(rellich_ratio(v, 2), rel=1e-10)


def test_zero_mean_hardy_stable_and_radial_diverges():
    f = exponential(2, 1.0)
    zm = [zero_mean_hardy_ratio(f, 1, 3, inner=2.0**-k) for k in range(8, 17, 2)]
    assert (max(zm) - min(zm)) / zm[-1] < 0.01
    rad = [hardy_ratio(f, 3, inner=2.0**-k) for k in range(8, 17, 2)]
    assert np.all(np.diff(rad) > 0)
    # ratio ~ eps^{(N-p)/p} = eps^{-1/3}: each halving of eps multiplies by ~2^{1/3}
    rate = np.log2(np.array(rad[1:]) / np.array(rad[:-1])) / 2
    assert rate[-1] == pytest.approx(1 / 3, rel=0.1)
    with pytest.raises(ParameterError):
        zero_mean_hardy_ratio(f, 0, 3)
    lam = 3.7
    assert zero_mean_hardy_ratio(f.dilate(lam), 1, 3) == pytest.approx(zero_mean_hardy_ratio(f, 1, 3), rel=1e-10)


def test_vanishing_norms_rejected():
    const = power_cutoff(3, 0.0, 0.0, 0.0)
    with pytest.raises(ParameterError):
        hardy_ratio(const, 2)
    with pytest.raises(ParameterError):
        rellich_ratio(const, 2)


def test_multiplicative_examples():
    rep = multiplicative_check(gaussian_bump(3, 1.0), 2, 1.0)
    assert rep.spread <= 1e-8
    assert rep.expected_finite and rep.refinement_finite
    np.testing.assert_allclose(rep.constants, rep.constant, rtol=1e-8)
    bad = multiplicative_check(gaussian_bump(2, 1.0), 4, 1.0)
    assert bad.spread <= 1e-8
    assert not bad.expected_finite and not bad.refinement_finite
    assert np.all(np.diff(bad.refinement) > 0)
    # the first mode raises the threshold to N/p + 1
    lifted = multiplicative_check(gaussian_bump(2, 1.0, n=1), 4, 1.0)
    assert lifted.expected_finite and lifted.refinement_finite
    rel = multiplicative_check(gaussian_bump(5, 1.0), 2, 1.5, which="rellich")
    assert rel.spread <= 1e-8 and rel.refinement_finite


def test_multiplicative_validation():
    u = gaussian_bump(3)
    with pytest.raises(ParameterError):
        multiplicative_check(u, 2, 1.5, "hardy")
    with pytest.raises(ParameterError):
        multiplicative_check(u, 2, 1.0, "sobolev")


def test_divergence_witness_examples():
    w = divergence_witness(OperatorParams(3, 1.0, 1.0, 4.0), 0)
    assert w.diverges and not w.logarithmic
    assert w.exponent == pytest.approx(0.25, rel=0.02)
    assert np.all(np.diff(w.norms) > 0)
    assert len(w.epsilons) == 17 and w.epsilons[0] == 2.0**-4 and w.epsilons[-1] == 2.0**-20
    log = divergence_witness(OperatorParams(2, 1.0, 1.0, 2.0), 0)
    assert log.diverges and log.logarithmic
    # logarithmic: squared truncated norm grows linearly in k
    inc = np.diff(log.norms**2)
    np.testing.assert_allclose(inc[5:], inc[-1], rtol=1e-6)
    with pytest.raises(ParameterError):
        divergence_witness(OperatorParams(3, 1.0, 1.0, 2.0), 0)
    with pytest.raises(ParameterError):
        divergence_witness(OperatorParams(3, 1.5, 1.0, 4.0), 1)


def test_truncated_sequence_converges_below_threshold():
    seq = truncated_norm_sequence(OperatorParams(3, 0.5, 1.0, 2.0), 0)
    assert not seq.diverges
    assert seq.exponent == pytest.approx((0.5 * 2 - 3) / 2, rel=0.02)


def test_witness_function_shape():
    u = witness_function(3, 1)
    # r P_1 on the inner half: ||u||_{L^2(B_1/2)}^2 = (1/2)^5 / 5
    assert norm(u, 2, inner=1e-30, outer=0.5) ** 2 == pytest.approx(0.5**5 / 5, rel=1e-12)
    csv = truncated_norm_sequence(OperatorParams(3, 1.0, 1.0, 2.0), 0).to_csv()
    assert csv.startswith("epsilon,truncated_norm\n") and csv.count("\n") == 18


def test_quasi_accretive_examples():
    rep = quasi_accretive_check(gaussian_bump(3, 1.0), 2, 1.0, 0.5)
    assert rep.passed and math.isfinite(rep.C_used)
    assert rep.C_min <= rep.C_used
    Cs = [proof_constant(3, 2, 1.0, e)[0] for e in (0.1, 0.25, 0.5, 1.0, 2.0)]
    assert np.all(np.diff(Cs) <= 0)
    for a in (0.5, 1.5):
        for e in (0.1, 1.0):
            assert quasi_accretive_check(gaussian_bump(3, 0.5), 2, a, e).passed
    tiny = quasi_accretive_check(gaussian_bump(3, 1.0).dilate(1e3), 2, 1.0, 0.5)
    assert tiny.passed
    with pytest.raises(ParameterError):
        proof_constant(3, 2, 1.0, 0.0)
    with pytest.raises(ParameterError):
        quasi_accretive_check(gaussian_bump(3, n=1), 2, 1.0, 0.5)


@pytest.mark.parametrize("N,p", [(3, 1.5), (4, 2.0), (5, 3.0)])
def test_hardy_sweep_no_violation(N, p):
    rows = family_sweep(N, p)
    assert len(rows) >= 50
    assert all(r["ratio"] <= r["bound"] * (1 + 1e-3) for r in rows)


@pytest.mark.parametrize("N,p", [(5, 2.0), (7, 3.0), (5, 1.5)])
def test_rellich_sweep_no_violation(N, p):
    rows = family_sweep(N, p, "rellich")
    assert len(rows) >= 50
    assert all(r["ratio"] <= r["bound"] * (1 + 1e-3) for r in rows)


def test_sweep_csv_format():
    rows = family_sweep(4, 2.0, members=default_members(4, 2.0)[:3])
    text = sweep_csv(rows)
    lines = text.split("\n")
    assert lines[0] == "family,N,p,alpha,ratio,bound,margin"
    assert len(lines) == 5 and lines[-1] == ""
    assert float(lines[1].split(",")[-1]) == pytest.approx(rows[0]["margin"], rel=1e-15)
