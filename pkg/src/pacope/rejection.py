"""Rejection sampling of logged data toward the target-policy joint law.

A logged triple ``(S_i, A_i, R_i)`` is kept when ``V_i <= w(S_i, A_i) / B``
with ``V_i ~ U[0, 1]`` drawn in dataset index order, where ``w = pi_e / pi_b``
is the policy density ratio and ``B`` an upper bound on its supremum. Kept
``(context, reward)`` pairs are, conditionally on their count, i.i.d. from the
target-policy joint distribution, so downstream calibration can treat them as
on-policy draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import GaussianLinearPolicy, LoggedDataset, StochasticPolicy, _as_context_matrix, ceil_scaled

__all__ = [
    "WeightFunction",
    "RsDataset",
    "weight_from_policies",
    "gaussian_ratio_bound",
    "rejection_sample",
]


@dataclass(frozen=True)
class WeightFunction:
    """Density ratio ``w(s, a)`` together with an upper bound on its supremum.

    ``ratio`` must be vectorized over ``(n, d)`` contexts and ``(n,)`` actions.
    ``bound`` is the constant ``B >= 1``; an under-estimate silently breaks the
    distributional guarantee, which is why :func:`rejection_sample` clamps and
    counts ratios exceeding the bound instead of trusting it blindly.
    """

    ratio: Callable[[np.ndarray, np.ndarray], np.ndarray]
    bound: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.bound) and self.bound >= 1.0):
            raise ValueError("weight bound must be finite and >= 1")

    def eval(self, contexts: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return np.asarray(self.ratio(contexts, actions), dtype=float)


def weight_from_policies(
    pe: StochasticPolicy, pb: StochasticPolicy, bound: float
) -> WeightFunction:
    """Build ``w = pi_e / pi_b`` with the convention ``0 / 0 = 0``."""

    def ratio(contexts: np.ndarray, actions: np.ndarray) -> np.ndarray:
        num = pe.density(contexts, actions)
        den = pb.density(contexts, actions)
        out = np.zeros_like(num)
        pos = den > 0.0
        out[pos] = num[pos] / den[pos]
        out[(~pos) & (num > 0.0)] = math.inf
        return out

    return WeightFunction(ratio, bound)


def gaussian_ratio_bound(
    pe: GaussianLinearPolicy,
    pb: GaussianLinearPolicy,
    context_probe: np.ndarray,
) -> float:
    """Upper bound on ``sup_(s,a) pi_e(a|s) / pi_b(a|s)`` for Gaussian policies.

    For a fixed context the ratio of two Gaussian action densities with
    ``v_e < v_b`` attains the closed-form supremum
    ``sqrt(v_b / v_e) * exp((mu_e(s) - mu_b(s))^2 / (2 (v_b - v_e)))``. The
    returned bound is the maximum of that expression over the probe contexts,
    inflated by a 1.1 safety factor when the mean functions differ anywhere on
    the probe grid (the per-context supremum then varies with ``s``); it is
    exact when the means coincide on every probe.

    Raises ``ValueError`` when ``v_e >= v_b``, unless the policies are
    identical (in which case the ratio is identically one and ``B = 1``).
    """
    probe = _as_context_matrix(context_probe)
    if probe.shape[0] == 0:
        raise ValueError("context probe must be non-empty")
    mu_e = pe.mean(probe)
    mu_b = pb.mean(probe)
    means_coincide = bool(np.all(mu_e == mu_b))
    if pe.variance >= pb.variance:
        if means_coincide and pe.variance == pb.variance:
            return 1.0
        raise ValueError(
            "weight unbounded: target policy variance must be smaller than "
            "behavior policy variance"
        )
    gap = pb.variance - pe.variance
    per_context = math.sqrt(pb.variance / pe.variance) * np.exp(
        (mu_e - mu_b) ** 2 / (2.0 * gap)
    )
    bound = float(np.max(per_context))
    if not means_coincide:
        bound *= 1.1
    return max(bound, 1.0)


@dataclass(frozen=True)
class RsDataset:
    """Accepted ``(context, reward)`` pairs, in original dataset index order.

    ``source_indices`` are the positions of the accepted samples in the input
    dataset (strictly increasing). ``n_violations`` counts samples whose ratio
    exceeded the stated bound before clamping.
    """

    contexts: np.ndarray
    rewards: np.ndarray
    source_indices: np.ndarray
    n_violations: int = 0

    def __post_init__(self) -> None:
        contexts = _as_context_matrix(self.contexts)
        rewards = np.asarray(self.rewards, dtype=float).reshape(-1)
        indices = np.asarray(self.source_indices, dtype=int).reshape(-1)
        if not (contexts.shape[0] == rewards.shape[0] == indices.shape[0]):
            raise ValueError("contexts, rewards, and source_indices must have equal length")
        if indices.size > 1 and not np.all(np.diff(indices) > 0):
            raise ValueError("source_indices must be strictly increasing")
        object.__setattr__(self, "contexts", contexts)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "source_indices", indices)

    def __len__(self) -> int:
        return self.contexts.shape[0]

    @property
    def accepted_count(self) -> int:
        return len(self)

    def split(self, gamma: float) -> tuple["RsDataset", "RsDataset"]:
        """Training prefix / calibration tail split, mirroring ``split_dataset``."""
        if not 0.0 < gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        n = len(self)
        cut = n - ceil_scaled(gamma * n)
        return (
            RsDataset(self.contexts[:cut], self.rewards[:cut], self.source_indices[:cut], self.n_violations),
            RsDataset(self.contexts[cut:], self.rewards[cut:], self.source_indices[cut:], self.n_violations),
        )


def rejection_sample(
    d: LoggedDataset, w: WeightFunction, rng: np.random.Generator
) -> RsDataset:
    """Keep sample ``i`` iff ``V_i <= w(S_i, A_i) / B``, preserving index order.

    One uniform variate is consumed per sample, in dataset index order, so the
    acceptance pattern is a deterministic function of the stream. Ratios above
    the bound are clamped to acceptance probability one and counted in
    ``n_violations`` rather than raising: a violated bound degrades the
    guarantee but should not abort a Monte Carlo sweep.
    """
    n = len(d)
    if n == 0:
        return RsDataset(
            np.empty((0, d.context_dim)), np.empty(0), np.empty(0, dtype=int), 0
        )
    v = rng.uniform(size=n)
    ratios = w.eval(d.contexts, d.actions)
    accept_prob = ratios / w.bound
    violations = int(np.count_nonzero(accept_prob > 1.0))
    accept_prob = np.minimum(accept_prob, 1.0)
    keep = v <= accept_prob
    idx = np.flatnonzero(keep)
    return RsDataset(d.contexts[idx], d.rewards[idx], idx, violations)
