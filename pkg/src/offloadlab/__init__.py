"""Handover-suppression laboratory for femtocell/macrocell networks.

Closed-form renewal analytics for the signaling/offloading trade-off of
threshold-deferred femtocell handover, a seeded Monte Carlo session
simulator that independently validates them, and an optimal-threshold
selector, behind one scriptable CLI.
"""

__version__ = "0.1.0"

from .analytics import (  # noqa: F401
    AnalyticReport,
    ScenarioParams,
    analyze,
    baseline_handover_count,
    baseline_offload_time,
    case_probabilities,
    crossing_count_pmf,
    handover_success_probs,
    lambda_ratio,
    offload_time_means,
    theta,
    theta_and_lambda,
    to_handover_count,
    to_offload_time,
)
from .errors import (  # noqa: F401
    ConsistencyWarning,
    OffloadLabError,
    ParameterError,
    ScenarioError,
    TraceFormatError,
)
from .optimize import Optimum, OptimizerConfig, find_optimal, objective, objective_profile  # noqa: F401
from .residence import (  # noqa: F401
    DistributionSpec,
    RandomStream,
    laplace,
    make_from_moments,
    residual_laplace,
    residual_sample,
    residual_weighted_moment,
    sample,
    weighted_moment,
)
from .scenario import Scenario, load_scenario, loads_scenario  # noqa: F401
from .simulate import (  # noqa: F401
    SessionOutcome,
    SimConfig,
    SimEstimate,
    SimReport,
    backend_name,
    run_monte_carlo,
    simulate_session,
    visit_level_probe,
)
