"""Extremal momentum profiles, Calabi energies and Calabi flow on ruled surfaces."""

from .calabi import (
    EnergyReport,
    calabi_functional,
    energy_report,
    f_functional,
    l_functional,
    mabuchi_modified,
    minimizer_calabi,
)
from .extremal import (
    Minimizer,
    Regime,
    RegimeError,
    check_optimality,
    classify,
    closed_form_minimizer,
    extremal_profile,
    minimizer,
    solve_k1,
    solve_k2,
)
from .flow import FlowConfig, FlowStagnation, FlowState, default_initial, run, step
from .futaki import (
    PiecewiseLinearConvex,
    approximate_neg_S,
    futaki_invariant,
    futaki_norm,
    futaki_via_integral,
    lower_bound_sweep,
)
from .profile import (
    Grid,
    Profile,
    ProfileError,
    ProfileKind,
    ScalarField,
    average_scalar_curvature,
    make_grid,
    scalar_curvature,
)

__version__ = "0.1.0"

__all__ = [
    "EnergyReport",
    "FlowConfig",
    "FlowStagnation",
    "FlowState",
    "Grid",
    "Minimizer",
    "PiecewiseLinearConvex",
    "Profile",
    "ProfileError",
    "ProfileKind",
    "Regime",
    "RegimeError",
    "ScalarField",
    "approximate_neg_S",
    "average_scalar_curvature",
    "calabi_functional",
    "check_optimality",
    "classify",
    "closed_form_minimizer",
    "default_initial",
    "energy_report",
    "extremal_profile",
    "f_functional",
    "futaki_invariant",
    "futaki_norm",
    "futaki_via_integral",
    "l_functional",
    "lower_bound_sweep",
    "mabuchi_modified",
    "make_grid",
    "minimizer",
    "minimizer_calabi",
    "run",
    "scalar_curvature",
    "solve_k1",
    "solve_k2",
    "step",
]
