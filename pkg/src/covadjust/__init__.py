"""Covariate adjustment toolkit for randomized trials.

Provides covariate-adaptive randomization engines, the linearly adjusted
estimator family (unadjusted means, homogeneous-slope, and per-arm
heterogeneous-slope adjustment) with heteroscedasticity-robust inference, an
exact asymptotic-variance oracle for finite discrete populations, and a
reproducible Monte Carlo harness.
"""

from .data import (
    ArmAllocation,
    EstimatorFit,
    EstimatorMethod,
    PocockSimonMinimization,
    PopulationSpec,
    SchemeSpec,
    Simple,
    StratifiedBiasedCoin,
    StratifiedPermutedBlock,
    STRATUM_SEPARATOR,
    TrialDataset,
    join_strata,
    sample_covariance,
    split_stratum,
    validate_dataset,
    z_dummy_matrix,
)
from .errors import (
    ArmLabelOutOfRange,
    BudgetExceeded,
    CovadjustError,
    DomainError,
    EmptyArm,
    MissingOmega,
    NonFiniteValue,
    NotAContrast,
    SingularContrastCovariance,
    SingularDesign,
    SingularSigmaX,
    TooFewPatients,
    TooFewRows,
    UnknownMargin,
    UnknownStratum,
    ValidationError,
)
from .estimate import (
    arm_slope,
    arm_slope_pooled_cov,
    fit_ancova,
    fit_anhecova,
    fit_anova,
    fit_linear_adjusted,
    pooled_slope,
    slope_matrix,
)
from .inference import (
    ContrastResult,
    Difference,
    HomogeneityTest,
    LogOddsRatio,
    OddsRatio,
    Ratio,
    chi_square_quantile,
    contrast_ci,
    homogeneity_test,
    normal_quantile,
    robust_vcov,
    scheffe_band,
    treatment_effect_ci,
    two_sided_p,
)
from .asymptotics import (
    AsymptoticProfile,
    OmegaMap,
    contrast_variance_gaps,
    exact_enumeration_vcov,
    gram_domination_gap,
    population_moments,
    stratum_residual_means,
    v_car,
    v_simple,
)
from .randomize import (
    BalanceRow,
    RandomizerState,
    assign_all,
    balance_report,
    next_assignment,
)
from .rng import replication_rngs, substream
from .simulate import (
    MethodSpec,
    ReportRow,
    ScenarioConfig,
    SimulationReport,
    SweepRow,
    SyntheticSpec,
    mc_error_of_sd,
    replicate_dataset,
    run_scenario,
    sweep_interaction,
    sweep_to_csv,
)

__version__ = "0.1.0"
