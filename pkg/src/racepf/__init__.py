"""Particle filtering with exact resampling from intractable weights.

The core primitive is a rejection race over (constant, coin) weight
factorizations: an alias-table proposal followed by one coin flip per round
selects indices exactly according to weights that are only available as
unbiased coins. On top of it sit a particle filter engine with exact-weight,
random-weight, and race resampling strategies, the models the engine is
benchmarked on, and a CLI that reproduces the desk-scale experiments.
"""

from .alias import AliasTable, TrialCounter, alias_draw, build_alias_table, geometric_sample_mean_variance
from .coins import (
    BrownianBridge,
    PoissonCoinConfig,
    SampledPath,
    WeightEstimate,
    bridge_sample_at,
    coin_from_unit_estimate,
    cox_thinning_coin,
    pgf_coin,
    poisson_weight_estimate,
)
from .errors import (
    CapabilityMissing,
    ConfigBoundViolation,
    DegenerateStep,
    EmptyInput,
    EstimatorRangeViolation,
    InsufficientDraws,
    InvalidParameter,
    InvalidStep,
    InvalidTime,
    InvalidWeights,
    RacePFError,
    StoppingBudgetExceeded,
)
from .filter import (
    DEFAULT_FUNCTIONALS,
    FilterOutput,
    KalmanReference,
    LikelihoodEstimate,
    ParticleEnsemble,
    StateSpaceModelSpec,
    StepRecord,
    estimate_functionals,
    estimate_likelihood,
    kalman_reference,
    resample,
    run_filter,
)
from .race import (
    Coin,
    CltReport,
    FixedProbabilityCoin,
    RaceOutcome,
    RhoEstimate,
    SpinCoin,
    WeightFactorization,
    clt_diagnostics,
    estimate_rho,
    race_once,
    race_resample,
)
from .streams import RandomStream

__version__ = "0.1.0"
