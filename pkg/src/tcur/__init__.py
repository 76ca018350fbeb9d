"""Desk-scale laboratory for diffuse space-time currents on (0,1) x T^d.

The package discretizes the objects behind a currents-based treatment of the
continuity equation: periodic space-time fields, mollification, diffuse 1-
and 2-currents with boundaries and flat norms, flow maps with push-forwards,
the transport commutator, and two independent transport solvers, all wired
into reproducible experiments through the ``tcur`` command line tool.
"""

from .commutators import CommutatorReport, commutator, commutator_sweep, decompose_commutator
from .currents import (
    BoundaryDistribution,
    Current1Diffuse,
    Current2Diffuse,
    FlatNormCertificate,
    NullBoundaryError,
    OneForm,
    boundary1,
    boundary2,
    flat_bound_constructive,
    flat_norm_lp,
    horizontal_from_boundary,
    mass,
    mass2,
    pair,
    primitive_two_current,
    split,
    vertical_mass,
)
from .flow import (
    FlowInversionError,
    FlowMap,
    SpaceTimeDiffeo,
    compute_flow,
    pullback_form,
    pushforward_current,
    pushforward_density,
    straighten,
)
from .grid import (
    CENTRAL,
    SPECTRAL,
    NormExponents,
    PeriodicGrid,
    ScalarField,
    TimeClampWarning,
    VectorField,
    cumulative_time_integral,
    derivative,
    divergence,
    interpolate,
    linf_lq_norm,
    lp_norm,
    time_derivative,
)
from .mollifiers import MollifierKernel, bump_kernel, kernel_from_csv, kernel_from_profile, kernel_moment, mollify, mollify_vector, regularized_current
from .pde import CFLError, ContinuityProblem, RoughFieldSpec, measure_field_regularity, rough_field, solve_continuity, weak_residual

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
