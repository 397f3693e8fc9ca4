"""Behavior-policy estimation for the unknown-policy setting.

When the logging policy is unknown it is estimated on a first data split and
the density-ratio weights are formed against the estimate. Two estimators are
provided: maximum likelihood over a finite policy class (selection by total
log density, ties broken by list order) and parametric Gaussian fitting
(affine mean, constant variance, with the fitted variance clamped away from
the target policy's variance so the downstream weight bound exists).

The weight-estimation error ``E |w_hat(S, A) - w(S, A)|`` over the true
logging distribution is an experiment-side diagnostic: it requires the true
behavior policy and is only computable in synthetic mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._gd import fit_gaussian_affine
from .calibrate import (
    CalibratedPredictor,
    CalibrationDiagnostics,
    ScoreList,
    _trivial_predictor,
    binomial_quantile_k,
    nonconformity,
    pac_threshold,
)
from .core import (
    GaussianLinearPolicy,
    LoggedDataset,
    PacParams,
    StochasticPolicy,
    _as_context_matrix,
    split_dataset,
)
from .quantile import QuantileTrainConfig, fit_quantile_pair
from .rejection import gaussian_ratio_bound, rejection_sample, weight_from_policies

__all__ = [
    "FinitePolicyClass",
    "WeightErrorReport",
    "PolicyFitConfig",
    "finite_policy_class",
    "mle_policy",
    "fit_gaussian_policy",
    "estimate_weight_error",
    "pacopp_unknown",
]


@dataclass(frozen=True)
class FinitePolicyClass:
    """Non-empty candidate set with a uniform bound on the target ratio.

    ``ratio_bound`` upper-bounds ``sup_(s,a) pi_e(a|s) / pi(a|s)`` for every
    member simultaneously.
    """

    policies: tuple[StochasticPolicy, ...]
    ratio_bound: float

    def __post_init__(self) -> None:
        if not self.policies:
            raise ValueError("policy class must be non-empty")
        if not (math.isfinite(self.ratio_bound) and self.ratio_bound >= 1.0):
            raise ValueError("ratio_bound must be finite and >= 1")
        object.__setattr__(self, "policies", tuple(self.policies))

    def __len__(self) -> int:
        return len(self.policies)


def finite_policy_class(
    policies,
    pe: GaussianLinearPolicy,
    probe_contexts,
    probe_actions=None,
) -> FinitePolicyClass:
    """Build a class with its uniform ratio bound from Gaussian members.

    The bound is the maximum over members of the closed-form per-context
    supremum on the probe grid. When probe actions are supplied, the ratio is
    additionally verified against the bound at every probe pair.
    """
    members = tuple(policies)
    bounds = [gaussian_ratio_bound(pe, member, probe_contexts) for member in members]
    b_pi = max(bounds)
    if probe_actions is not None:
        ctx = _as_context_matrix(probe_contexts)
        actions = np.asarray(probe_actions, dtype=float).reshape(-1)
        if actions.shape[0] != ctx.shape[0]:
            raise ValueError("probe actions must align with probe contexts")
        for member in members:
            ratio = pe.density(ctx, actions) / member.density(ctx, actions)
            if np.any(ratio > b_pi * (1.0 + 1e-12)):
                raise ValueError("ratio bound violated on the probe grid")
    return FinitePolicyClass(members, b_pi)


def mle_policy(pclass: FinitePolicyClass, d1: LoggedDataset) -> StochasticPolicy:
    """Class member maximizing the total conditional log density of the data.

    Ties are broken by list order; the empty dataset scores every member zero
    and therefore returns the first. A member putting zero density on any
    logged pair scores minus infinity; if all members do, this is an error.
    """
    totals = np.empty(len(pclass))
    for i, policy in enumerate(pclass.policies):
        if len(d1) == 0:
            totals[i] = 0.0
        else:
            totals[i] = float(np.sum(policy.log_density(d1.contexts, d1.actions)))
    if np.all(np.isneginf(totals)):
        raise ValueError("every policy-class member has zero likelihood on the data")
    return pclass.policies[int(np.argmax(totals))]


def _fit_gaussian_policy_raw(
    d1: LoggedDataset, learning_rate: float, epochs: int
) -> tuple[np.ndarray, float]:
    x1 = np.hstack([np.ones((len(d1), 1)), d1.contexts])
    w, sigma, _ = fit_gaussian_affine(x1, d1.actions, learning_rate, epochs)
    return w, sigma * sigma


def fit_gaussian_policy(
    d1: LoggedDataset,
    min_variance_margin: float,
    target_variance: float,
    rng: np.random.Generator | None = None,
    learning_rate: float = 0.2,
    epochs: int = 600,
) -> GaussianLinearPolicy:
    """Affine-mean constant-variance Gaussian MLE of the behavior policy.

    The fitted variance is clamped to at least
    ``target_variance * (1 + min_variance_margin)``: the rejection-sampling
    weight is bounded only when the estimated behavior variance exceeds the
    target's, so the clamp enforces that hypothesis by construction. The
    ``rng`` argument is accepted for interface symmetry; the fit itself is
    deterministic.
    """
    if len(d1) < 2:
        raise ValueError("insufficient data: need at least 2 samples")
    if min_variance_margin < 0:
        raise ValueError("min_variance_margin must be nonnegative")
    w, variance = _fit_gaussian_policy_raw(d1, learning_rate, epochs)
    floor = target_variance * (1.0 + min_variance_margin)
    return GaussianLinearPolicy(w[1:], float(w[0]), max(variance, floor))


@dataclass(frozen=True)
class WeightErrorReport:
    """Monte Carlo estimate of the mean absolute weight-estimation error."""

    delta_w_hat: float
    mc_samples: int

    def __post_init__(self) -> None:
        if self.delta_w_hat < 0 or not math.isfinite(self.delta_w_hat):
            raise ValueError("delta_w_hat must be finite and nonnegative")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")


def estimate_weight_error(
    pbhat: StochasticPolicy,
    pb_true: StochasticPolicy,
    pe: StochasticPolicy,
    mc: int,
    rng: np.random.Generator,
    context_sampler: Callable[[int, np.random.Generator], np.ndarray],
) -> WeightErrorReport:
    """Monte Carlo average of ``|w_hat - w|`` over the true logging law.

    ``context_sampler(m, rng)`` must draw ``m`` contexts from the context
    distribution; actions are then drawn from the true behavior policy.
    Synthetic mode only: the true behavior policy is required.
    """
    if mc < 1:
        raise ValueError("mc must be >= 1")
    contexts = _as_context_matrix(context_sampler(mc, rng))
    actions = pb_true.sample(contexts, rng)
    den_true = pb_true.density(contexts, actions)
    den_hat = pbhat.density(contexts, actions)
    num = pe.density(contexts, actions)
    w = np.where(den_true > 0, num / np.where(den_true > 0, den_true, 1.0), 0.0)
    w_hat = np.where(den_hat > 0, num / np.where(den_hat > 0, den_hat, 1.0), 0.0)
    return WeightErrorReport(float(np.mean(np.abs(w_hat - w))), mc)


@dataclass(frozen=True)
class PolicyFitConfig:
    """How the unknown behavior policy is estimated.

    ``method`` is ``"gaussian"`` (parametric MLE fit), ``"mle"`` (selection
    from ``finite_class``), or ``"fixed"`` (use ``fixed_policy`` as given,
    mainly for tests and oracle comparisons).
    """

    method: str = "gaussian"
    finite_class: FinitePolicyClass | None = None
    fixed_policy: StochasticPolicy | None = None
    min_variance_margin: float = 0.05
    learning_rate: float = 0.2
    epochs: int = 600

    def __post_init__(self) -> None:
        if self.method not in ("gaussian", "mle", "fixed"):
            raise ValueError("method must be 'gaussian', 'mle', or 'fixed'")
        if self.method == "mle" and self.finite_class is None:
            raise ValueError("the mle method requires a finite_class")
        if self.method == "fixed" and self.fixed_policy is None:
            raise ValueError("the fixed method requires a fixed_policy")


def pacopp_unknown(
    d: LoggedDataset,
    pe: GaussianLinearPolicy,
    params: PacParams,
    pcfg: PolicyFitConfig | None = None,
    qcfg: QuantileTrainConfig | None = None,
    rng: np.random.Generator | None = None,
) -> CalibratedPredictor:
    """Full pipeline with an estimated behavior policy.

    The logged data is split *before* rejection sampling: the estimator sees
    only the training half, and both halves are then rejection-sampled with
    the estimated ratio. Quantiles are fit on the accepted training pairs and
    the threshold is calibrated on the accepted calibration pairs. Degenerate
    stages fall back to the trivial predictor with a diagnostics flag.

    Stream consumption order: policy fit (none for the deterministic
    estimators), acceptance variates for the training half, acceptance
    variates for the calibration half, then model initialization.
    """
    if rng is None:
        raise ValueError("an rng is required")
    pcfg = pcfg or PolicyFitConfig()
    qcfg = qcfg or QuantileTrainConfig()
    dim = d.context_dim if len(d) else 1
    if len(d) == 0:
        return _trivial_predictor(params, dim, n_rs=0, m_cal=0, violations=0, bound=1.0)
    d1, d2 = split_dataset(d, params.gamma)
    variance_clamped = False
    if pcfg.method == "gaussian":
        if len(d1) < 2:
            return _trivial_predictor(params, dim, n_rs=0, m_cal=0, violations=0, bound=1.0)
        w_fit, raw_variance = _fit_gaussian_policy_raw(d1, pcfg.learning_rate, pcfg.epochs)
        floor = pe.variance * (1.0 + pcfg.min_variance_margin)
        variance_clamped = raw_variance < floor
        pbhat = GaussianLinearPolicy(w_fit[1:], float(w_fit[0]), max(raw_variance, floor))
    elif pcfg.method == "mle":
        pbhat = mle_policy(pcfg.finite_class, d1)
    else:
        pbhat = pcfg.fixed_policy
    if not isinstance(pbhat, GaussianLinearPolicy):
        raise ValueError("automatic weight bounds require a Gaussian behavior estimate")
    bound = gaussian_ratio_bound(pe, pbhat, d.contexts)
    w_hat = weight_from_policies(pe, pbhat, bound)
    rs1 = rejection_sample(d1, w_hat, rng)
    rs2 = rejection_sample(d2, w_hat, rng)
    violations = rs1.n_violations + rs2.n_violations
    n_rs = len(rs1) + len(rs2)
    if len(rs1) < 2 or len(rs2) == 0:
        return _trivial_predictor(
            params, dim, n_rs=n_rs, m_cal=len(rs2), violations=violations,
            bound=bound, variance_clamped=variance_clamped,
        )
    model = fit_quantile_pair(rs1, qcfg, params, rng)
    scores = ScoreList(nonconformity(model, rs2.contexts, rs2.rewards))
    k = binomial_quantile_k(len(rs2), params.epsilon, params.delta)
    threshold = pac_threshold(scores, params.epsilon, params.delta)
    diagnostics = CalibrationDiagnostics(
        n_rs=n_rs,
        m_cal=len(rs2),
        k=k,
        tie_flag=scores.has_ties,
        weight_violations=violations,
        trivial=False,
        bound=bound,
        variance_clamped=variance_clamped,
    )
    return CalibratedPredictor(model, threshold, params, diagnostics)
