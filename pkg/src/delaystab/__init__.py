"""Stability toolkit for linear scalar equations with distributed delays."""

from .criteria import (
    ChordSolution,
    DecidedBy,
    ExtremalDistribution,
    FeasibilityError,
    Region,
    StabilityVerdict,
    SweepResult,
    classify,
    constants_c_thetac,
    cs_crossings,
    cs_sweep,
    extremal_f_star,
    extremal_given_u,
    g_eval,
    hayes_bound,
)
from .distributions import (
    DelayDistribution,
    DiscreteAtoms,
    GammaKernel,
    GammaMixture,
    PoleProximityError,
    discrete,
    dist_from_json,
    gamma_density,
    gamma_mixture,
    point_mass_zero,
    single_delay,
)
from .simulator import (
    DelayMode,
    HematoModel,
    HematoStateVerdict,
    HistorySpec,
    SteadyBranch,
    SteadyState,
    Trace,
    TraceClass,
    classify_trace,
    hemato_linearize,
    hemato_steady_states,
    hemato_verdict,
    simulate_hemato,
    simulate_linear,
)
from .spectrum import (
    CharacteristicProblem,
    RootMethod,
    RootReport,
    RootSearchError,
    chain_matrix,
    chain_polynomial,
    lambert_w0,
    polynomial_roots,
    rightmost_root,
    rightmost_root_discrete,
)

__version__ = "0.1.0"
