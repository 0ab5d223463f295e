"""Design and analysis of staggered-adoption event studies.

Classify panel observations by the identification assumptions licensing their
use, build balancing-weight estimators and exact implied-weight
decompositions of two-way fixed-effects regressions, and report weighting
diagnostics.
"""

from .balance import (
    BalanceProblem,
    BalanceSolution,
    InfeasibleError,
    build_expanded_problem,
    build_general_reference_problem,
    build_ideal_problem,
    estimate_from_solutions,
    robust_contrast,
    solve_balance,
    twfe_target_problems,
)
from .contrast import WeightedContrast, decompose_by_group, hajek_contrast, ideal_contrast
from .diagnostics import (
    CV_OVERFLOW,
    DiagnosticsReport,
    build_report,
    ess,
    influence,
    influence_refit,
    sign_reversal_scan,
    smd_table,
    weight_dispersion,
)
from .inference import (
    BootstrapConfig,
    BootstrapResult,
    EventStudyCurve,
    cluster_bootstrap,
    event_study_sweep,
    resample_panel,
)
from .io import (
    RunConfig,
    config_hash,
    load_divorce_dataset,
    parse_spec,
    read_weights_csv,
    spec_to_dict,
    write_csv,
    write_json,
)
from .panel import (
    NEVER,
    AssumptionSet,
    EstimandSpec,
    ObservationTag,
    Panel,
    PanelError,
    ResolvedEstimand,
    classify,
    classify_arrays,
    group_counts,
    load_panel,
)
from .qp import IntervalQP, QpSolution, minimal_inflation, solve_interval_qp
from .twfe import (
    TwfeFit,
    TwfeSpec,
    fit_twfe,
    implied_weights,
    tau_name,
    twfe_general_estimate,
)

__version__ = "0.1.0"
