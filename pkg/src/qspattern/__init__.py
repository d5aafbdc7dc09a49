"""Pattern-formation toolkit for a chemically structured quorum-sensing model.

Subpackages cover the full workflow: model definition and base states
(:mod:`.model`), linear stability (:mod:`.dispersion`), WKBJ series
recursions (:mod:`.series`), the weakly nonlinear pipeline (:mod:`.wna`)
with its quadrature oracle (:mod:`.laplace`), a conservative 2-D solver
for the governing equations (:mod:`.pde`), pseudo-arclength continuation
(:mod:`.continuation`), divergent-series diagnostics (:mod:`.stokes`) and
batch drivers plus the command line (:mod:`.sweeps`, :mod:`.cli`).
"""

from .model import (
    ModelParams,
    MotilitySpec,
    ProductionSpec,
    SteadyState,
    default_params,
    derivatives_of_g,
    motility_taylor,
    solve_steady_state,
)
from .dispersion import (
    DispersionCubic,
    GrowthSpectrum,
    build_cubic,
    critical_Dprime,
    growth_rates,
    growth_spectrum,
    logistic_dispersion,
)
from .series import (
    AmplitudeOdeSpec,
    SeriesContext,
    SeriesTable,
    eval_series,
    oracle_series,
    q_table,
    s_table,
    w_table,
)
from .wna import (
    BranchPrediction,
    WnaReport,
    amplitude_ode,
    branch_prediction,
    coefficient_b,
    compute_c20,
    compute_c22,
    compute_integrals,
    compute_mu,
    find_mu_crossing,
    wna_report,
)

__version__ = "0.1.0"
