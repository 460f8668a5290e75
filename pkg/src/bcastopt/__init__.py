"""bcastopt: joint broadcast bandwidth, pricing, and file-scheduling
optimization for a mixed unicast/broadcast cell, with Monte Carlo
validation of the analytic revenue bound."""

from .channel import (
    RateModel,
    broadcast_rate,
    prob_high_from_area_ratio,
    sample_user_rate,
    unicast_rate,
)
from .demand import (
    FileCatalog,
    FileSpec,
    ZipfParams,
    aggregate_delay_tolerance,
    build_catalog,
    sample_requests,
    zipf_pmf,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    InvalidParameterError,
    InvalidPermutationError,
    PayoffDomainError,
    PreconditionError,
)
from .optimizer import (
    CellConfig,
    OptimizationResult,
    closed_form_bandwidth,
    closed_form_price,
    exact_bandwidth,
    exact_price,
    joint_optimize,
    lower_bound_revenue,
    price_validity_floor,
    revenue_gain,
)
from .payoff import (
    PricePair,
    Service,
    SimulationReport,
    broadcast_payoff,
    select_service,
    simulate_revenue,
    unicast_payoff,
)
from .scenario import (
    ExperimentSpec,
    NormalizationScheme,
    load_spec,
    normalize,
    operating_point,
    run_sweep,
    run_validation,
)
from .scheduler import (
    Schedule,
    brute_force_best_order,
    cumulative_sizes,
    optimal_schedule,
    popularity_schedule,
    scheduled_demand_moment,
    smith_cost,
    smith_schedule,
    suboptimal_schedule,
)

__version__ = "0.1.0"
