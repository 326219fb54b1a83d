"""Numerical laboratory for S = -Delta + c|x|^-alpha on L^p(R^N), 0 < alpha < 2.

Submodules
----------
special_functions   Gamma, correction series psi / psi-tilde, cut-offs, profiles phi, phi_j
harmonics           spherical-harmonic modes, sphere quadrature, projections
radial_operator     graded radial mesh and the finite-volume mode operators A_n
spectral            bound states, discrete eigenpairs, negativity certificate
semigroup           time stepping of e^{-tS}, positivity, growth rates, gauge operator
inequalities        Hardy / Rellich ratios, threshold witnesses, quasi-accretivity
domain_classifier   regimes of D(S_p), decomposition into corrections plus remainder
cli                 command-line front end
"""
from .params import NumericalError, OperatorParams, ParameterError
from .harmonics import ModeIndex, UnsupportedDimensionError, sphere_quadrature
from .radial_operator import ModeField, RadialGrid, build_mode_operator, lp_norm, resolvent_solve
from .special_functions import CorrectionProfile, build_profile, cutoff, gamma
from .spectral import bound_state_candidate, eigen_lowest, negativity_certificate, rayleigh_quotient
from .semigroup import EvolutionSpec, Trajectory, evolve, gauge_identity_check, growth_rate_fit
from .inequalities import hardy_ratio, quasi_accretive_check, rellich_ratio, divergence_witness
from .domain_classifier import (ExtrapolationError, FullGridSample, Regime, classify, decompose,
                                membership_test, reconstruct)

__version__ = "0.1.0"

__all__ = [
    "NumericalError", "OperatorParams", "ParameterError", "ModeIndex", "UnsupportedDimensionError",
    "sphere_quadrature", "ModeField", "RadialGrid", "build_mode_operator", "lp_norm",
    "resolvent_solve", "CorrectionProfile", "build_profile", "cutoff", "gamma",
    "bound_state_candidate", "eigen_lowest", "negativity_certificate", "rayleigh_quotient",
    "EvolutionSpec", "Trajectory", "evolve", "gauge_identity_check", "growth_rate_fit",
    "hardy_ratio", "quasi_accretive_check", "rellich_ratio", "divergence_witness",
    "ExtrapolationError", "FullGridSample", "Regime", "classify", "decompose",
    "membership_test", "reconstruct",
]
