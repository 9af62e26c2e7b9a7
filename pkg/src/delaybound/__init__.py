"""Scalar comparison bounds for nonlinear delay systems.

A vector system ``x' = A(t) x + f(t, x, x(t - h_i)) + F0 e(t)`` is reduced to
a scalar delay equation whose solution bounds ``|x(t)|``; the scalar
equation is then used for stability certificates and region estimates.
"""

from .auxiliary import (
    ScalarDelaySystem,
    StabilityVerdict,
    build_autonomous_majorant,
    build_auxiliary,
    build_linearized,
    build_perturbed_auxiliary,
    chi_tilde_max,
    closed_form_criterion,
    decompose_linear_response,
)
from .comparison import (
    DominationReport,
    check_fts,
    check_history_monotonicity,
    check_ordering_lemma,
    verify_domination,
)
from .dde_core import (
    DelayEquation,
    DelaySpec,
    HistoryFunction,
    ToleranceConfig,
    Trajectory,
    VectorDelaySystem,
    evaluate,
    integrate,
    integrate_batch,
)
from .errors import *  # noqa: F401,F403
from .fundamental import FundamentalData, compute_fundamental, induced_norm2, log_norm_rate
from .nonlinearity import DominatingL, LinearTerm, MonomialTerm, PolynomialField, dominating_L, linearize_L
from .region import (
    BlowUpDetector,
    RegionBoundary,
    embedded_disk_radius,
    estimate_boundary_polar,
    verify_disk_in_region,
)
from .scenarios import Section6Scenario, instantiate, load_scenario

__version__ = "0.1.0"
