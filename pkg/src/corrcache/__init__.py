"""Memory-power trade-offs for cache-aided delivery of correlated content
over a degraded Gaussian broadcast channel."""

from .bounds import lower_bound_power, residual_rates
from .experiments import (
    ConfigError,
    CurvePoint,
    ExperimentConfig,
    emit_csv,
    load_config,
    parse_config,
    preset_config,
    preset_names,
    read_csv,
    run_experiment,
    verify_command,
)
from .model import (
    AlphaProfile,
    ChannelConfig,
    CorrelatedLibrary,
    DemandVector,
    SubfileId,
    alpha_to_rates,
    correlation_ignorant_projection,
    distinct_demand_count,
    file_rate,
    rates_to_alpha,
    representative_worst_demand,
    worst_case_demand_set,
)
from .oracle import KnowledgeState, OracleReport, TokenSpace, can_decode, verify_scheme
from .piggyback import (
    CodedCache,
    LevelMessage,
    build_level_messages,
    coded_place,
    level_power_conditions,
    meets_lower_bound,
    piggyback_applicable,
    piggyback_power,
)
from .power import PowerResult, min_superposition_power, rate_feasible
from .superposition import (
    CacheAllocation,
    GroupDemand,
    MessagePlan,
    PlacementSpec,
    XorMessage,
    achievable_power_constructive,
    cache_split,
    constructive_rates,
    generate_messages,
    group_subfiles,
    optimize_allocation,
    per_group_rate_bound,
    place,
    placement_from_t,
    scheme_rate_bound,
    single_demand_messages,
    upper_bound_power,
)

__version__ = "0.1.0"
