"""Monte Carlo resource adequacy with gradient-based capacity accreditation."""

__version__ = "0.1.0"

from .accredit import (
    AccreditationReport,
    AccreditationStudy,
    PortfolioResult,
    SolverTrace,
    ZeroValueResourceError,
    accredit_mri_fd,
    accredit_mri_ipa,
    elcc_solve,
    portfolio_perturb,
    sweep_load_scale,
    sweep_step_size,
)
from .dispatch import (
    GREEDY,
    DispatchPolicy,
    ShortfallSurface,
    dispatch_scenario,
    shortfall_surface,
)
from .gradients import (
    GradientEstimate,
    IpaUnsupportedError,
    NegativeCapacityError,
    SystemEvaluator,
    fd_gradient,
    ipa_gradient,
)
from .metrics import (
    RiskEstimate,
    aggregate_cvar,
    aggregate_expectation,
    metric_lold,
    metric_lolh,
    metric_ue,
)
from .oracle import (
    AdequateBaselineError,
    ExactAssessment,
    IrregularBaselineError,
    OracleUnsupportedError,
    exact_weight_batch,
    oracle_assess,
    oracle_elcc,
    oracle_gradient,
)
from .streams import RngPolicy, ScenarioBatch, derive_stream, sample_batch
from .system import (
    AvailabilityProfile,
    Direction,
    GeneratorSpec,
    LoadTrajectory,
    SpecError,
    StorageSpec,
    SystemSpec,
    load_system_spec,
    perfect_direction,
    portfolio_direction,
    profile_direction,
    resource_direction,
    scale_load,
    storage_policy_direction,
    write_system_spec,
)
