"""PAC conformal calibration: binomial cutoff, scores, threshold, intervals.

Given calibration scores ``tau_1..tau_M``, the cutoff
``k(M, eps, delta) = max{k in {-1..M-1} : F_Bin(M, eps)(k) <= delta}`` selects
the ``(M - k)``-th smallest score as the threshold; ``k = -1`` (or ``M = 0``)
yields an infinite threshold and the trivial whole-line interval. The binomial
CDF is evaluated by exact incremental pmf summation in log space, never by a
normal approximation: the coverage guarantee is exact and must not be eroded
numerically.

The split-conformal comparator (plain ``1 - eps`` empirical quantile with an
appended infinity atom) lives here too, along with the inflated level it would
need for the same training-conditional guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from .core import (
    GaussianLinearPolicy,
    LoggedDataset,
    PacParams,
    PredictionInterval,
    StochasticPolicy,
    _as_context_matrix,
    ceil_scaled,
)
from .quantile import QuantilePairModel, QuantileTrainConfig, fit_quantile_pair, trivial_quantile_model
from .rejection import gaussian_ratio_bound, rejection_sample, weight_from_policies

__all__ = [
    "ScoreList",
    "CalibrationDiagnostics",
    "CalibratedPredictor",
    "binomial_quantile_k",
    "nonconformity",
    "pac_threshold",
    "pac_threshold_argmin_oracle",
    "split_cp_threshold",
    "split_cp_inflated_level",
    "split_cp_min_calibration_size",
    "predict",
    "pacopp_known",
]


@dataclass(frozen=True)
class ScoreList:
    """Calibration scores in original index order, with tie tracking.

    Ties are permitted (they are broken by original index downstream) but
    flagged: the finite-sample frequency bounds assume almost-surely distinct
    scores, so a tie is worth surfacing in diagnostics.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.size and not np.all(np.isfinite(values)):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def has_ties(self) -> bool:
        return bool(np.unique(self.values).size < self.values.size)


def _score_values(scores) -> np.ndarray:
    if isinstance(scores, ScoreList):
        return scores.values
    return np.asarray(scores, dtype=float).reshape(-1)


_TIE_LOG_TOL = 1e-9


def _cdf_leq_exact(m: int, epsilon: float, delta: float, k: int) -> bool:
    # Exact-rational adjudication of F_Bin(m, eps)(k) <= delta; float inputs
    # are dyadic rationals, so the comparison has a definite answer.
    eps = Fraction(epsilon)
    pmf = (1 - eps) ** m
    cdf = pmf
    for i in range(1, k + 1):
        pmf = pmf * (m - i + 1) * eps / (i * (1 - eps))
        cdf += pmf
    return cdf <= Fraction(delta)


def binomial_quantile_k(m: int, epsilon: float, delta: float) -> int:
    """Largest ``k`` in ``{-1, .., m-1}`` with ``F_Bin(m, epsilon)(k) <= delta``.

    Computed by summing binomial pmf terms incrementally in log space
    (``logaddexp`` accumulation over lgamma-based log pmfs), which keeps tail
    probabilities far below double underflow exact to machine precision.
    Comparisons that land within floating error of the boundary are
    re-adjudicated in exact rational arithmetic, so the result always equals
    the true cutoff for the given float inputs. ``m = 0`` returns -1.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if m == 0:
        return -1
    ks = np.arange(m, dtype=float)
    log_pmf = (
        gammaln(m + 1.0)
        - gammaln(ks + 1.0)
        - gammaln(m - ks + 1.0)
        + ks * math.log(epsilon)
        + (m - ks) * math.log1p(-epsilon)
    )
    log_cdf = np.logaddexp.accumulate(log_pmf)
    log_delta = math.log(delta)
    slack = _TIE_LOG_TOL * (1.0 + np.abs(log_cdf) + abs(log_delta))
    below = np.flatnonzero(log_cdf <= log_delta + slack)
    k = int(below[-1]) if below.size else -1
    # The true cutoff can only sit at or below the optimistic k; walk down
    # through boundary-ambiguous verdicts, adjudicating each one exactly.
    while k >= 0 and abs(log_cdf[k] - log_delta) <= slack[k] and not _cdf_leq_exact(m, epsilon, delta, k):
        k -= 1
    return k


def nonconformity(model: QuantilePairModel, contexts, rewards) -> np.ndarray | float:
    """Score ``max(q_lo(s) - r, r - q_up(s))``; negative strictly inside the band."""
    ctx = _as_context_matrix(contexts)
    r = np.asarray(rewards, dtype=float).reshape(-1)
    lo, up = model.quantiles(ctx)
    out = np.maximum(lo - r, r - up)
    return float(out[0]) if out.shape[0] == 1 and np.ndim(rewards) == 0 else out


def pac_threshold(scores, epsilon: float, delta: float) -> float:
    """The ``(M - k)``-th smallest score, with the ``(M+1)``-th being infinity.

    Ties are broken by original index (stable sort); ``k = -1`` or an empty
    score list yields ``+inf`` (the trivial interval).
    """
    values = _score_values(scores)
    m = values.shape[0]
    k = binomial_quantile_k(m, epsilon, delta)
    if k < 0:
        return math.inf
    order = np.argsort(values, kind="stable")
    return float(values[order[m - k - 1]])


def pac_threshold_argmin_oracle(scores, epsilon: float, delta: float) -> float:
    """Brute-force form: smallest candidate threshold leaving at most ``k`` misses.

    Candidates are the score values themselves plus infinity. Used only as a
    test oracle for :func:`pac_threshold`.
    """
    values = _score_values(scores)
    m = values.shape[0]
    k = binomial_quantile_k(m, epsilon, delta)
    if m == 0:
        return math.inf
    for tau in np.sort(values):
        if int(np.count_nonzero(values > tau)) <= k:
            return float(tau)
    return math.inf


def split_cp_threshold(scores, level: float) -> float:
    """``ceil(level * (M+1))``-th smallest of the scores with an infinity atom.

    The plain split-conformal threshold at the given level; returns ``+inf``
    when the index lands on the appended atom.
    """
    if not 0.0 < level <= 1.0:
        raise ValueError("level must lie in (0, 1]")
    values = _score_values(scores)
    m = values.shape[0]
    j = max(1, ceil_scaled(level * (m + 1)))
    if j >= m + 1:
        return math.inf
    order = np.argsort(values, kind="stable")
    return float(values[order[j - 1]])


def split_cp_inflated_level(epsilon: float, delta: float, m: int) -> float:
    """Level split CP must use for the same training-conditional guarantee.

    ``1 - eps + sqrt(ln(1/delta) / (2M))``; exceeds one unless ``M`` is at
    least :func:`split_cp_min_calibration_size`, which is what makes plain
    split CP inapplicable at small calibration sizes.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    return 1.0 - epsilon + math.sqrt(math.log(1.0 / delta) / (2.0 * m))


def split_cp_min_calibration_size(epsilon: float, delta: float) -> int:
    """Smallest ``M`` with :func:`split_cp_inflated_level` at most one."""
    return int(math.ceil(math.log(1.0 / delta) / (2.0 * epsilon**2)))


@dataclass(frozen=True)
class CalibrationDiagnostics:
    """Run metadata attached to a calibrated predictor."""

    n_rs: int
    m_cal: int
    k: int
    tie_flag: bool
    weight_violations: int
    trivial: bool
    bound: float
    variance_clamped: bool = False


@dataclass(frozen=True)
class CalibratedPredictor:
    """Quantile pair plus threshold: maps a context to a prediction interval.

    The threshold is infinite exactly when the cutoff is -1 or the calibration
    set is empty, in which case every interval is the whole real line.
    """

    model: QuantilePairModel
    threshold: float
    params: PacParams
    diagnostics: CalibrationDiagnostics

    def __post_init__(self) -> None:
        infinite = math.isinf(self.threshold)
        degenerate = self.diagnostics.k == -1 or self.diagnostics.m_cal == 0
        if infinite != degenerate:
            raise ValueError("threshold must be infinite iff k == -1 or the calibration set is empty")

    def interval_batch(self, contexts) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized interval endpoints for an array of contexts."""
        lo, up = self.model.quantiles(contexts)
        return lo - self.threshold, up + self.threshold

    def predict(self, s) -> PredictionInterval:
        lo, hi = self.interval_batch(s)
        return PredictionInterval(float(lo[0]), float(hi[0]))

    def covers(self, contexts, rewards) -> np.ndarray:
        """Closed-membership indicator, via the score/threshold duality."""
        scores = nonconformity(self.model, contexts, rewards)
        return np.asarray(scores) <= self.threshold

    def dump(self) -> str:
        d = self.diagnostics
        lines = [
            f"epsilon={self.params.epsilon!r}",
            f"delta={self.params.delta!r}",
            f"gamma={self.params.gamma!r}",
            f"eps_lo={self.params.eps_lo!r}",
            f"eps_up={self.params.eps_up!r}",
            f"threshold={self.threshold!r}",
            f"n_rs={d.n_rs}",
            f"m_cal={d.m_cal}",
            f"k={d.k}",
            f"tie_flag={int(d.tie_flag)}",
            f"weight_violations={d.weight_violations}",
            f"trivial={int(d.trivial)}",
            f"bound={d.bound!r}",
            f"variance_clamped={int(d.variance_clamped)}",
        ]
        model_lines = [f"model.{line}" for line in self.model.dump().splitlines()]
        return "\n".join(lines + model_lines) + "\n"

    @staticmethod
    def load(text: str) -> "CalibratedPredictor":
        plain: dict[str, str] = {}
        model_lines: list[str] = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("model."):
                model_lines.append(line[len("model."):])
            else:
                key, _, value = line.partition("=")
                plain[key] = value
        params = PacParams(
            epsilon=float(plain["epsilon"]),
            delta=float(plain["delta"]),
            gamma=float(plain["gamma"]),
            eps_lo=float(plain["eps_lo"]),
            eps_up=float(plain["eps_up"]),
        )
        diagnostics = CalibrationDiagnostics(
            n_rs=int(plain["n_rs"]),
            m_cal=int(plain["m_cal"]),
            k=int(plain["k"]),
            tie_flag=bool(int(plain["tie_flag"])),
            weight_violations=int(plain["weight_violations"]),
            trivial=bool(int(plain["trivial"])),
            bound=float(plain["bound"]),
            variance_clamped=bool(int(plain["variance_clamped"])),
        )
        model = QuantilePairModel.load("\n".join(model_lines))
        return CalibratedPredictor(model, float(plain["threshold"]), params, diagnostics)


def predict(p: CalibratedPredictor, s) -> PredictionInterval:
    """Interval ``[q_lo(s) - threshold, q_up(s) + threshold]`` (closed)."""
    return p.predict(s)


def _trivial_predictor(
    params: PacParams,
    context_dim: int,
    n_rs: int,
    m_cal: int,
    violations: int,
    bound: float,
    variance_clamped: bool = False,
) -> CalibratedPredictor:
    diagnostics = CalibrationDiagnostics(
        n_rs=n_rs,
        m_cal=m_cal,
        k=-1,
        tie_flag=False,
        weight_violations=violations,
        trivial=True,
        bound=bound,
        variance_clamped=variance_clamped,
    )
    model = trivial_quantile_model((params.eps_lo, params.eps_up), context_dim)
    return CalibratedPredictor(model, math.inf, params, diagnostics)


def pacopp_known(
    d: LoggedDataset,
    pb: StochasticPolicy,
    pe: StochasticPolicy,
    params: PacParams,
    qcfg: QuantileTrainConfig | None = None,
    rng: np.random.Generator | None = None,
) -> CalibratedPredictor:
    """Full pipeline with a known behavior policy.

    Rejection-sample the logged data with the oracle density ratio, split the
    accepted pairs into a training prefix and calibration tail, fit the
    quantile pair, score the calibration pairs, and pick the PAC threshold.
    A degenerate split (fewer than two training pairs or no calibration pairs)
    yields the trivial predictor with a diagnostics flag instead of an error,
    so Monte Carlo sweeps stay total.

    The stream is consumed in a fixed order: acceptance variates first (one
    per sample, dataset index order), then any model initialization.
    """
    if rng is None:
        raise ValueError("an rng is required")
    qcfg = qcfg or QuantileTrainConfig()
    dim = d.context_dim if len(d) else 1
    if len(d) == 0:
        return _trivial_predictor(params, dim, n_rs=0, m_cal=0, violations=0, bound=1.0)
    if not isinstance(pb, GaussianLinearPolicy) or not isinstance(pe, GaussianLinearPolicy):
        raise ValueError(
            "automatic weight bounds are available for Gaussian policies only; "
            "use rejection.weight_from_policies with an explicit bound"
        )
    bound = gaussian_ratio_bound(pe, pb, d.contexts)
    w = weight_from_policies(pe, pb, bound)
    rs = rejection_sample(d, w, rng)
    train, cal = rs.split(params.gamma)
    if len(train) < 2 or len(cal) == 0:
        return _trivial_predictor(
            params, dim, n_rs=len(rs), m_cal=len(cal), violations=rs.n_violations, bound=bound
        )
    model = fit_quantile_pair(train, qcfg, params, rng)
    scores = ScoreList(nonconformity(model, cal.contexts, cal.rewards))
    k = binomial_quantile_k(len(cal), params.epsilon, params.delta)
    threshold = pac_threshold(scores, params.epsilon, params.delta)
    diagnostics = CalibrationDiagnostics(
        n_rs=len(rs),
        m_cal=len(cal),
        k=k,
        tie_flag=scores.has_ties,
        weight_violations=rs.n_violations,
        trivial=False,
        bound=bound,
    )
    return CalibratedPredictor(model, threshold, params, diagnostics)
