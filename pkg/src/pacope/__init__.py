"""PAC prediction intervals for off-policy reward evaluation in contextual
bandits: rejection sampling toward the target-policy law, conformal quantile
calibration with an exact binomial cutoff, baselines, and a seeded benchmark
harness with analytic oracles.
"""

from .core import (
    Context,
    GaussianLinearPolicy,
    LoggedDataset,
    LoggedSample,
    PacParams,
    PredictionInterval,
    StochasticPolicy,
    TargetDataset,
    TargetSample,
    child_rng,
    load_csv,
    master_rng,
    save_csv,
    split_dataset,
)
from .rejection import (
    RsDataset,
    WeightFunction,
    gaussian_ratio_bound,
    rejection_sample,
    weight_from_policies,
)
from .quantile import (
    QuantilePairModel,
    QuantileTrainConfig,
    fit_quantile_pair,
    pinball_loss,
)
from .calibrate import (
    CalibratedPredictor,
    CalibrationDiagnostics,
    ScoreList,
    binomial_quantile_k,
    nonconformity,
    pac_threshold,
    pac_threshold_argmin_oracle,
    pacopp_known,
    predict,
    split_cp_inflated_level,
    split_cp_min_calibration_size,
    split_cp_threshold,
)
from .baselines import (
    CoppConfig,
    CoppInterval,
    RewardModelGaussian,
    copp_predict,
    copp_rs_predict,
    copp_weight,
    fit_reward_model,
)
from .behavior import (
    FinitePolicyClass,
    PolicyFitConfig,
    WeightErrorReport,
    estimate_weight_error,
    finite_policy_class,
    fit_gaussian_policy,
    mle_policy,
    pacopp_unknown,
)
from .synthenv import (
    DEFAULT_ENV,
    SynthEnvSpec,
    TheoremConstants,
    oracle_interval,
    oracle_quantile,
    oracle_quantiles,
    sample_logged,
    sample_target,
    sample_target_rewards_at,
    symmetric_difference_measure,
    target_reward_cdf,
    theorem_constants,
)
from .bench import (
    AggregateTable,
    BenchConfig,
    TrialReport,
    check_theorem_bounds,
    default_finite_class,
    evaluate_miscoverage,
    run_figure1,
    run_figure2,
    run_theorem4_convergence,
    run_unknown_sweep,
    simulate_trial,
)
from .cli import cli

__version__ = "0.1.0"
