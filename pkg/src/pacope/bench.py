"""Experiment harness: seeded trial sweeps, coverage metrics, figure tables,
and theorem-bound checks.

Every sweep derives one child stream per (tag, grid point, run, substream)
from the master seed, so results are bit-identical across reruns and across
serial/parallel execution; workers share nothing mutable and the result table
is assembled in trial-index order regardless of completion order.

Desk-scale defaults (500 runs, 10,000 test points) replace the full-scale run
counts of the original experiments; every asserted frequency carries a
3-sigma Monte Carlo tolerance. Full scale is reachable through the config.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .baselines import (
    CoppConfig,
    _copp_hull,
    _copp_weights_batch,
    _weighted_quantile_thresholds,
    fit_reward_model,
)
from .behavior import (
    FinitePolicyClass,
    PolicyFitConfig,
    _fit_gaussian_policy_raw,
    estimate_weight_error,
    finite_policy_class,
    mle_policy,
    pacopp_unknown,
)
from .calibrate import (
    CalibratedPredictor,
    ScoreList,
    binomial_quantile_k,
    nonconformity,
    pac_threshold,
    pacopp_known,
    split_cp_threshold,
)
from .core import (
    GaussianLinearPolicy,
    PacParams,
    TargetDataset,
    child_rng,
    split_dataset,
)
from .quantile import QuantileTrainConfig, fit_quantile_pair
from .rejection import RsDataset, gaussian_ratio_bound, rejection_sample, weight_from_policies
from .synthenv import (
    DEFAULT_ENV,
    SynthEnvSpec,
    oracle_quantiles,
    sample_logged,
    sample_target,
    theorem_constants,
)

__all__ = [
    "BenchConfig",
    "TrialReport",
    "AggregateTable",
    "evaluate_miscoverage",
    "simulate_trial",
    "run_figure1",
    "run_figure2",
    "check_theorem_bounds",
    "run_theorem4_convergence",
    "run_unknown_sweep",
    "default_finite_class",
]

_TAG_KNOWN = 1
_TAG_FIGURE2 = 2
_TAG_THEOREM4 = 3
_TAG_UNKNOWN = 4

FIGURE1_HEADER = ("n", "delta_eps", "runs", "band_freq", "stderr")
FIGURE1_TRIALS_HEADER = ("n", "run", "miscoverage", "mean_length", "trivial_flag")
FIGURE2_HEADER = ("method", "delta", "run", "coverage", "mean_length", "trivial_flag")
BOUNDS_HEADER = ("n", "freq", "lower", "upper", "vacuous", "pass")
THEOREM4_HEADER = ("n", "runs", "contexts", "n_trivial", "median_measure")


@dataclass(frozen=True)
class BenchConfig:
    """Knobs for all sweeps; field names double as config-file keys."""

    n: int = 2000
    runs: int = 500
    test_points: int = 10000
    epsilon: float = 0.2
    delta: float = 0.1
    gamma: float = 0.5
    model_kind: str = "affine"
    hidden_width: int = 32
    learning_rate: float = 0.1
    epochs: int = 1500
    n_grid: tuple[int, ...] = (500, 1000, 2000, 4000)
    delta_eps_grid: tuple[float, ...] = (0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.5, 1.0)
    delta_eps: float = 0.05
    figure2_deltas: tuple[float, ...] = (0.5, 0.25, 0.1, 0.01)
    copp_mc_samples: int = 50
    copp_grid_size: int = 200
    copp_grid_margin: float = 0.25
    length_subsample: int = 500
    theorem4_n_grid: tuple[int, ...] = (500, 2000, 8000)
    theorem4_runs: int = 40
    theorem4_contexts: int = 250
    policy_margin: float = 0.05
    policy_learning_rate: float = 0.2
    policy_epochs: int = 600
    weight_error_mc: int = 0
    n_jobs: int = 1
    env: SynthEnvSpec = DEFAULT_ENV

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.test_points < 1:
            raise ValueError("test_points must be >= 1")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.n < 0:
            raise ValueError("n must be nonnegative")

    def pac_params(self, delta: float | None = None) -> PacParams:
        return PacParams(self.epsilon, self.delta if delta is None else delta, self.gamma)

    def quantile_config(self) -> QuantileTrainConfig:
        return QuantileTrainConfig(
            self.model_kind, self.hidden_width, self.learning_rate, self.epochs
        )

    def copp_config(self) -> CoppConfig:
        return CoppConfig(self.copp_mc_samples, self.copp_grid_size, self.copp_grid_margin)

    @staticmethod
    def from_mapping(mapping: dict[str, str]) -> "BenchConfig":
        """Build a config from flat ``key=value`` text entries.

        Environment parameters use ``env_`` keys (``env_mixture_weights``,
        ``env_component_variances``, ``env_context_variance``, ...); tuple
        values are comma-separated. Unknown keys raise.
        """
        cfg_fields = {f.name: f for f in fields(BenchConfig) if f.name != "env"}
        env_fields = {f.name: f for f in fields(SynthEnvSpec)}
        cfg_kwargs: dict = {}
        env_kwargs: dict = {}
        for key, raw in mapping.items():
            if key.startswith("env_"):
                name = key[len("env_"):]
                if name not in env_fields:
                    raise ValueError(f"unknown config key: {key}")
                env_kwargs[name] = _parse_value(raw, env_fields[name].type)
            elif key in cfg_fields:
                cfg_kwargs[key] = _parse_value(raw, cfg_fields[key].type)
            else:
                raise ValueError(f"unknown config key: {key}")
        env = SynthEnvSpec(**env_kwargs) if env_kwargs else DEFAULT_ENV
        return BenchConfig(env=env, **cfg_kwargs)


def _parse_value(raw: str, type_name: str):
    raw = raw.strip()
    if "tuple" in type_name:
        parts = [p for p in raw.split(",") if p.strip() != ""]
        if "int" in type_name:
            return tuple(int(p) for p in parts)
        return tuple(float(p) for p in parts)
    if type_name == "int":
        return int(raw)
    if type_name == "float":
        return float(raw)
    return raw


@dataclass(frozen=True)
class TrialReport:
    """Per-run record: empirical miscoverage, interval length, diagnostics."""

    method: str
    run: int
    n: int
    epsilon: float
    delta: float
    gamma: float
    miscoverage: float
    mean_length: float
    trivial: bool
    threshold: float
    n_rs: int
    m_cal: int
    k: int
    tie_flag: bool
    weight_violations: int
    delta_w_hat: float = float("nan")

    def __post_init__(self) -> None:
        if not 0.0 <= self.miscoverage <= 1.0:
            raise ValueError("miscoverage must lie in [0, 1]")
        if self.mean_length < 0:
            raise ValueError("mean_length must be nonnegative (inf allowed)")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "" if math.isnan(v) else repr(v)
    return str(value)


@dataclass(frozen=True)
class AggregateTable:
    """CSV-ready rows plus the raw per-trial reports they were computed from."""

    header: tuple[str, ...]
    rows: tuple[tuple, ...]
    trials: tuple[TrialReport, ...] = ()

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(self.header) + "\n")
            for row in self.rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")

    def column(self, name: str) -> list:
        i = self.header.index(name)
        return [row[i] for row in self.rows]


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate_miscoverage(predict_fn, test: TargetDataset) -> float:
    """Fraction of test points whose reward falls outside the interval.

    ``predict_fn`` maps a context to a :class:`PredictionInterval` (or any
    object with closed-membership ``contains``; ``None`` counts as an empty
    interval). Membership is closed on both ends.
    """
    if len(test) == 0:
        raise ValueError("test set must be non-empty")
    misses = 0
    for i in range(len(test)):
        interval = predict_fn(test.contexts[i])
        if interval is None or not interval.contains(float(test.rewards[i])):
            misses += 1
    return misses / len(test)


def _predictor_metrics(pred: CalibratedPredictor, test: TargetDataset) -> tuple[float, float]:
    lo, hi = pred.interval_batch(test.contexts)
    r = test.rewards
    miscoverage = float(np.mean((r < lo) | (r > hi)))
    length = math.inf if math.isinf(pred.threshold) else float(np.mean(hi - lo))
    return miscoverage, length


def _report(
    method: str,
    run: int,
    n: int,
    epsilon: float,
    delta: float,
    gamma: float,
    pred: CalibratedPredictor,
    test: TargetDataset,
    delta_w_hat: float = float("nan"),
) -> TrialReport:
    miscoverage, length = _predictor_metrics(pred, test)
    d = pred.diagnostics
    return TrialReport(
        method=method,
        run=run,
        n=n,
        epsilon=epsilon,
        delta=delta,
        gamma=gamma,
        miscoverage=miscoverage,
        mean_length=length,
        trivial=d.trivial or math.isinf(pred.threshold),
        threshold=pred.threshold,
        n_rs=d.n_rs,
        m_cal=d.m_cal,
        k=d.k,
        tie_flag=d.tie_flag,
        weight_violations=d.weight_violations,
        delta_w_hat=delta_w_hat,
    )


def _map_trials(fn, argslist, n_jobs: int) -> list:
    if n_jobs <= 1 or len(argslist) <= 1:
        return [fn(args) for args in argslist]
    chunk = max(1, len(argslist) // (4 * n_jobs))
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, argslist, chunksize=chunk))


# ---------------------------------------------------------------------------
# known-policy trials (figure 1 and bound checks share these streams)
# ---------------------------------------------------------------------------

def _known_trial(args) -> TrialReport:
    config, master_seed, n, run = args
    env = config.env
    params = config.pac_params()
    d = sample_logged(n, child_rng(master_seed, _TAG_KNOWN, n, run, 0), env)
    pred = pacopp_known(
        d,
        env.behavior_policy(),
        env.target_policy(),
        params,
        config.quantile_config(),
        child_rng(master_seed, _TAG_KNOWN, n, run, 1),
    )
    test = sample_target(config.test_points, child_rng(master_seed, _TAG_KNOWN, n, run, 2), env)
    return _report("PACOPP", run, n, config.epsilon, config.delta, config.gamma, pred, test)


def _known_sweep(config: BenchConfig, master_seed: int, n_values) -> list[TrialReport]:
    args = [(config, master_seed, n, run) for n in n_values for run in range(config.runs)]
    return _map_trials(_known_trial, args, config.n_jobs)


def run_figure1(config: BenchConfig, master_seed: int) -> AggregateTable:
    """Band frequencies of the known-policy pipeline over the (n, half-width) grid.

    Trials are shared across band half-widths for the same ``n``; each row
    reports the empirical frequency of ``eps - delta_eps < miscoverage <= eps``
    with its binomial standard error.
    """
    trials = _known_sweep(config, master_seed, config.n_grid)
    rows = []
    for n in config.n_grid:
        l_hat = np.array([t.miscoverage for t in trials if t.n == n])
        for de in config.delta_eps_grid:
            inside = (l_hat > config.epsilon - de) & (l_hat <= config.epsilon)
            freq = float(np.mean(inside))
            stderr = math.sqrt(freq * (1.0 - freq) / config.runs)
            rows.append((n, de, config.runs, freq, stderr))
    return AggregateTable(FIGURE1_HEADER, tuple(rows), tuple(trials))


def figure1_trials_table(table: AggregateTable) -> AggregateTable:
    """Raw per-trial rows backing a figure-1 table (for exact recomputation)."""
    rows = tuple(
        (t.n, t.run, t.miscoverage, t.mean_length, t.trivial) for t in table.trials
    )
    return AggregateTable(FIGURE1_TRIALS_HEADER, rows)


def check_theorem_bounds(config: BenchConfig, master_seed: int) -> AggregateTable:
    """Empirical PAC frequency against the finite-sample frequency bounds.

    For each ``n`` the frequency of ``miscoverage <= eps`` must lie in
    ``[1 - delta - c_band/sqrt(n) - 3s, 1 - delta + c_upper/sqrt(n) + 3s]``
    where ``s`` is the binomial Monte Carlo error at the nominal level. A side
    of the bound outside ``[0, 1]`` carries no information; such rows are
    flagged vacuous (they cannot fail on that side).
    """
    env = config.env
    probe = np.linspace(-10.0, 10.0, 21).reshape(-1, 1)
    bound = gaussian_ratio_bound(env.target_policy(), env.behavior_policy(), probe)
    constants = theorem_constants(
        bound, config.gamma, config.epsilon, config.delta, config.delta_eps
    )
    sigma_mc = math.sqrt(config.delta * (1.0 - config.delta) / config.runs)
    trials = _known_sweep(config, master_seed, config.n_grid)
    rows = []
    for n in config.n_grid:
        l_hat = np.array([t.miscoverage for t in trials if t.n == n])
        freq = float(np.mean(l_hat <= config.epsilon))
        lower = 1.0 - config.delta - constants.c_band / math.sqrt(n) - 3.0 * sigma_mc
        upper = 1.0 - config.delta + constants.c_upper / math.sqrt(n) + 3.0 * sigma_mc
        vacuous = lower < 0.0 or upper > 1.0
        passed = lower <= freq <= upper
        rows.append((n, freq, lower, upper, vacuous, passed))
    return AggregateTable(BOUNDS_HEADER, tuple(rows), tuple(trials))


# ---------------------------------------------------------------------------
# figure 2: method comparison on shared per-seed datasets
# ---------------------------------------------------------------------------

def _figure2_trial(args) -> list[TrialReport]:
    config, master_seed, run = args
    env = config.env
    pe = env.target_policy()
    eps, gamma, n = config.epsilon, config.gamma, config.n
    rng_data = child_rng(master_seed, _TAG_FIGURE2, run, 0)
    rng_test = child_rng(master_seed, _TAG_FIGURE2, run, 1)
    rng_algo = child_rng(master_seed, _TAG_FIGURE2, run, 2)
    rng_copp = child_rng(master_seed, _TAG_FIGURE2, run, 3)
    d = sample_logged(n, rng_data, env)
    test = sample_target(config.test_points, rng_test, env)
    d1, d2 = split_dataset(d, gamma)
    qcfg = config.quantile_config()
    params = config.pac_params()

    # Shared behavior-policy estimate (all methods run with estimated ratios).
    w_fit, raw_var = _fit_gaussian_policy_raw(
        d1, config.policy_learning_rate, config.policy_epochs
    )
    floor = pe.variance * (1.0 + config.policy_margin)
    pbhat = GaussianLinearPolicy(w_fit[1:], float(w_fit[0]), max(raw_var, floor))
    bound = gaussian_ratio_bound(pe, pbhat, d.contexts)
    w_hat = weight_from_policies(pe, pbhat, bound)
    rs1 = rejection_sample(d1, w_hat, rng_algo)
    rs2 = rejection_sample(d2, w_hat, rng_algo)
    violations = rs1.n_violations + rs2.n_violations
    reports: list[TrialReport] = []
    if len(rs1) < 2 or len(rs2) == 0:
        methods = [("PACOPP", delta) for delta in config.figure2_deltas]
        methods += [("COPP-RS", float("nan")), ("COPP", float("nan"))]
        for method, delta in methods:
            reports.append(TrialReport(
                method=method, run=run, n=n, epsilon=eps, delta=delta, gamma=gamma,
                miscoverage=0.0, mean_length=math.inf, trivial=True,
                threshold=math.inf, n_rs=len(rs1) + len(rs2), m_cal=len(rs2),
                k=-1, tie_flag=False, weight_violations=violations,
            ))
        return reports

    # Rejection-sampling methods share quantiles and calibration scores.
    qm = fit_quantile_pair(rs1, qcfg, params, rng_algo)
    scores_cal = ScoreList(nonconformity(qm, rs2.contexts, rs2.rewards))
    m_cal = len(scores_cal)
    qlo_t, qup_t = qm.quantiles(test.contexts)
    scores_test = np.maximum(qlo_t - test.rewards, test.rewards - qup_t)
    base_length = float(np.mean(qup_t - qlo_t))
    common = dict(
        run=run, n=n, epsilon=eps, gamma=gamma,
        n_rs=len(rs1) + len(rs2), m_cal=m_cal,
        tie_flag=scores_cal.has_ties, weight_violations=violations,
    )
    for delta in config.figure2_deltas:
        threshold = pac_threshold(scores_cal, eps, delta)
        k = binomial_quantile_k(m_cal, eps, delta)
        trivial = math.isinf(threshold)
        coverage = float(np.mean(scores_test <= threshold))
        length = math.inf if trivial else base_length + 2.0 * threshold
        reports.append(TrialReport(
            method="PACOPP", delta=delta, miscoverage=1.0 - coverage,
            mean_length=length, trivial=trivial, threshold=threshold, k=k, **common,
        ))
    threshold = split_cp_threshold(scores_cal, 1.0 - eps)
    trivial = math.isinf(threshold)
    coverage = float(np.mean(scores_test <= threshold))
    reports.append(TrialReport(
        method="COPP-RS", delta=float("nan"), miscoverage=1.0 - coverage,
        mean_length=math.inf if trivial else base_length + 2.0 * threshold,
        trivial=trivial, threshold=threshold, k=-1, **common,
    ))

    # COPP: weighted CP on the raw calibration half, no rejection sampling.
    rm = fit_reward_model(d1, rng_copp, config.policy_learning_rate, config.policy_epochs)
    qm_raw = fit_quantile_pair(
        RsDataset(d1.contexts, d1.rewards, np.arange(len(d1))), qcfg, params, rng_copp
    )
    h = config.copp_mc_samples
    cal_scores = np.asarray(nonconformity(qm_raw, d2.contexts, d2.rewards))
    cal_weights, zeros_cal = _copp_weights_batch(
        rm, pbhat, pe, d2.contexts, d2.rewards, h, rng_copp
    )
    test_weights, zeros_test = _copp_weights_batch(
        rm, pbhat, pe, test.contexts, test.rewards, h, rng_copp
    )
    thresholds = _weighted_quantile_thresholds(
        cal_scores, cal_weights, test_weights, 1.0 - eps
    )
    qlo_r, qup_r = qm_raw.quantiles(test.contexts)
    scores_test_raw = np.maximum(qlo_r - test.rewards, test.rewards - qup_r)
    coverage = float(np.mean(scores_test_raw <= thresholds))
    copp_cfg = config.copp_config()
    r_min, r_max = float(np.min(d2.rewards)), float(np.max(d2.rewards))
    n_hull = min(config.length_subsample, len(test))
    lengths = np.empty(n_hull)
    for j in range(n_hull):
        hull = _copp_hull(
            cal_scores, cal_weights, qm_raw, rm, pbhat, pe,
            test.contexts[j], eps, copp_cfg, rng_copp, r_min, r_max,
        )
        lengths[j] = hull.length()
    reports.append(TrialReport(
        method="COPP", run=run, n=n, epsilon=eps, delta=float("nan"), gamma=gamma,
        miscoverage=1.0 - coverage, mean_length=float(np.mean(lengths)),
        trivial=False, threshold=float("nan"), n_rs=0, m_cal=len(d2), k=-1,
        tie_flag=False, weight_violations=zeros_cal + zeros_test,
    ))
    return reports


def run_figure2(config: BenchConfig, master_seed: int) -> AggregateTable:
    """Coverage and length comparison of COPP, COPP-RS, and the PAC pipeline.

    All methods see identical per-seed datasets (shared data stream) with
    method-specific auxiliary streams. Rows are per run; the ``delta`` column
    is empty for the two non-PAC methods.
    """
    args = [(config, master_seed, run) for run in range(config.runs)]
    nested = _map_trials(_figure2_trial, args, config.n_jobs)
    trials = [t for batch in nested for t in batch]
    rows = tuple(
        (t.method, t.delta, t.run, 1.0 - t.miscoverage, t.mean_length, t.trivial)
        for t in trials
    )
    return AggregateTable(FIGURE2_HEADER, rows, tuple(trials))


# ---------------------------------------------------------------------------
# oracle-interval convergence (theorem-4 trend)
# ---------------------------------------------------------------------------

def _symdiff_finite(lo1, hi1, lo2, hi2) -> np.ndarray:
    """Vectorized symmetric-difference measure for finite interval arrays."""
    edge = np.abs(lo1 - lo2) + np.abs(hi1 - hi2)
    disjoint = np.minimum(hi1, hi2) < np.maximum(lo1, lo2)
    lengths = (hi1 - lo1) + (hi2 - lo2)
    return np.where(disjoint, lengths, edge)


def _theorem4_trial(args):
    config, master_seed, n, run = args
    env = config.env
    params = config.pac_params()
    d = sample_logged(n, child_rng(master_seed, _TAG_THEOREM4, n, run, 0), env)
    pred = pacopp_known(
        d, env.behavior_policy(), env.target_policy(), params,
        config.quantile_config(), child_rng(master_seed, _TAG_THEOREM4, n, run, 1),
    )
    rng_ctx = child_rng(master_seed, _TAG_THEOREM4, n, run, 2)
    contexts = (
        math.sqrt(env.context_variance) * rng_ctx.standard_normal(config.theorem4_contexts)
    ).reshape(-1, 1)
    if math.isinf(pred.threshold):
        return n, True, None
    lo, hi = pred.interval_batch(contexts)
    olo = oracle_quantiles(contexts, params.eps_lo, env)
    oup = oracle_quantiles(contexts, params.eps_up, env)
    return n, False, _symdiff_finite(lo, hi, olo, oup)


def run_theorem4_convergence(config: BenchConfig, master_seed: int) -> AggregateTable:
    """Median symmetric difference to the oracle interval, per sample size.

    Trivial-interval trials (infinite measure) are tallied separately and
    excluded from the median.
    """
    args = [
        (config, master_seed, n, run)
        for n in config.theorem4_n_grid
        for run in range(config.theorem4_runs)
    ]
    results = _map_trials(_theorem4_trial, args, config.n_jobs)
    rows = []
    for n in config.theorem4_n_grid:
        measures = [m for (nn, trivial, m) in results if nn == n and not trivial]
        n_trivial = sum(1 for (nn, trivial, _) in results if nn == n and trivial)
        pooled = np.concatenate(measures) if measures else np.empty(0)
        median = float(np.median(pooled)) if pooled.size else math.inf
        rows.append((n, config.theorem4_runs, config.theorem4_contexts, n_trivial, median))
    return AggregateTable(THEOREM4_HEADER, tuple(rows))


# ---------------------------------------------------------------------------
# unknown-policy sweeps (estimated behavior policy)
# ---------------------------------------------------------------------------

def default_finite_class(env: SynthEnvSpec) -> FinitePolicyClass:
    """Five Gaussian members sharing the target's mean slope, truth included.

    Shared slope keeps every member's density ratio against the target policy
    bounded over the whole context space, so the class admits a finite uniform
    ratio bound.
    """
    pe = env.target_policy()
    s = env.behavior_slope
    v = env.behavior_variance
    members = (
        env.behavior_policy(),
        GaussianLinearPolicy(np.array([s]), 1.0, v),
        GaussianLinearPolicy(np.array([s]), -1.0, v),
        GaussianLinearPolicy(np.array([s]), 0.0, 1.5 * v),
        GaussianLinearPolicy(np.array([s]), 0.5, 2.0 * v),
    )
    probe = np.linspace(-10.0, 10.0, 41).reshape(-1, 1)
    return finite_policy_class(members, pe, probe)


def _unknown_trial(args) -> TrialReport:
    config, master_seed, run, method, subtag = args
    env = config.env
    pe = env.target_policy()
    params = config.pac_params()
    rng_data = child_rng(master_seed, _TAG_UNKNOWN, subtag, run, 0)
    rng_algo = child_rng(master_seed, _TAG_UNKNOWN, subtag, run, 1)
    rng_test = child_rng(master_seed, _TAG_UNKNOWN, subtag, run, 2)
    d = sample_logged(config.n, rng_data, env)
    finite_class = default_finite_class(env) if method == "mle" else None
    pcfg = PolicyFitConfig(
        method=method,
        finite_class=finite_class,
        min_variance_margin=config.policy_margin,
        learning_rate=config.policy_learning_rate,
        epochs=config.policy_epochs,
    )
    pred = pacopp_unknown(d, pe, params, pcfg, config.quantile_config(), rng_algo)
    test = sample_target(config.test_points, rng_test, env)
    delta_w = float("nan")
    if config.weight_error_mc > 0 and len(d) >= 2:
        # The estimators are deterministic given the split, so refitting
        # reproduces the policy the pipeline used internally.
        d1, _ = split_dataset(d, params.gamma)
        if method == "mle":
            pbhat = mle_policy(finite_class, d1)
        else:
            w_fit, raw_var = _fit_gaussian_policy_raw(
                d1, config.policy_learning_rate, config.policy_epochs
            )
            floor = pe.variance * (1.0 + config.policy_margin)
            pbhat = GaussianLinearPolicy(w_fit[1:], float(w_fit[0]), max(raw_var, floor))
        sampler = lambda m, rng: (
            math.sqrt(env.context_variance) * rng.standard_normal(m)
        ).reshape(-1, 1)
        report = estimate_weight_error(
            pbhat, env.behavior_policy(), pe, config.weight_error_mc,
            child_rng(master_seed, _TAG_UNKNOWN, subtag, run, 3), sampler,
        )
        delta_w = report.delta_w_hat
    return _report(
        f"PACOPP-{method}", run, config.n, config.epsilon, config.delta,
        config.gamma, pred, test, delta_w_hat=delta_w,
    )


def run_unknown_sweep(
    config: BenchConfig, master_seed: int, method: str = "gaussian"
) -> AggregateTable:
    """Seeded trials of the estimated-behavior-policy pipeline.

    ``method`` selects the estimator ("gaussian" or "mle" over the default
    finite class). Set ``config.weight_error_mc`` to also estimate the mean
    absolute weight error per run (synthetic mode diagnostic).
    """
    if method not in ("gaussian", "mle"):
        raise ValueError("method must be 'gaussian' or 'mle'")
    subtag = 0 if method == "gaussian" else 1
    args = [(config, master_seed, run, method, subtag) for run in range(config.runs)]
    trials = _map_trials(_unknown_trial, args, config.n_jobs)
    rows = tuple(
        (t.method, t.run, t.n, t.miscoverage, t.mean_length, t.trivial, t.delta_w_hat)
        for t in trials
    )
    header = ("method", "run", "n", "miscoverage", "mean_length", "trivial_flag", "delta_w_hat")
    return AggregateTable(header, rows, tuple(trials))


# ---------------------------------------------------------------------------
# single trial
# ---------------------------------------------------------------------------

def simulate_trial(config: BenchConfig, master_seed: int, algo: str = "known") -> TrialReport:
    """One end-to-end trial on the synthetic environment."""
    if algo == "known":
        return _known_trial((config, master_seed, config.n, 0))
    if algo == "unknown":
        return _unknown_trial((config, master_seed, 0, "gaussian", 9))
    raise ValueError("algo must be 'known' or 'unknown'")
