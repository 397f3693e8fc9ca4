"""Domain types shared by the whole library: logged bandit data, stochastic
policies, seeded randomness, PAC parameters, and prediction intervals.

Conventions
-----------
* Contexts are fixed-length real vectors; a dataset stores them as an
  ``(n, d)`` float array. The synthetic experiments use ``d = 1``.
* Gaussian parameters are written ``(mean, variance)`` everywhere: the second
  parameter of a normal law is always the *variance*, never the standard
  deviation.
* Every dataset keeps its original collection order. No operation in this
  package reorders a dataset; calibration splits take the tail.
* All randomness flows through ``numpy`` Philox generators derived from a
  64-bit master seed plus an integer path (see :func:`child_rng`), so any
  pipeline is bit-reproducible and parallel workers get independent streams.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "Context",
    "LoggedSample",
    "TargetSample",
    "LoggedDataset",
    "TargetDataset",
    "StochasticPolicy",
    "GaussianLinearPolicy",
    "PacParams",
    "PredictionInterval",
    "master_rng",
    "child_rng",
    "split_dataset",
    "load_csv",
    "save_csv",
    "ceil_scaled",
]

Context = np.ndarray  # shape (d,), finite entries


# ---------------------------------------------------------------------------
# randomness
# ---------------------------------------------------------------------------

def child_rng(master_seed: int, *path: int) -> np.random.Generator:
    """Derive an independent counter-based stream from ``(master_seed, path)``.

    Identical seed and path always give the same stream, and distinct paths
    give streams that are independent by construction (Philox keyed through
    ``numpy.random.SeedSequence`` spawn keys). Trial ``i`` of a benchmark uses
    ``child_rng(seed, tag, i)``, which makes parallel execution order
    irrelevant to the results.
    """
    seq = np.random.SeedSequence(master_seed, spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(seq))


def master_rng(seed: int) -> np.random.Generator:
    """Root stream for a given 64-bit seed (equivalent to an empty path)."""
    return child_rng(seed)


# ---------------------------------------------------------------------------
# numeric helpers
# ---------------------------------------------------------------------------

def ceil_scaled(x: float, tol: float = 1e-9) -> int:
    """Ceiling with a snap tolerance for decimal levels stored as floats.

    ``fl(0.8) * 10`` is slightly above 8, so a naive ceiling would return 9
    where the intended real arithmetic gives 8. Values within ``tol`` (scaled)
    of an integer are snapped down before taking the ceiling.
    """
    return int(math.ceil(x - tol * max(1.0, abs(x))))


def _as_context_matrix(values: np.ndarray | Sequence[float] | float) -> np.ndarray:
    """Promote a scalar, vector, or matrix of contexts to shape ``(n, d)``."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ValueError(f"contexts must be at most 2-dimensional, got shape {arr.shape}")
    return arr


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# samples and datasets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LoggedSample:
    """One ``(context, action, reward)`` triple collected under the behavior policy."""

    context: np.ndarray
    action: float
    reward: float


@dataclass(frozen=True)
class TargetSample:
    """One ``(context, reward)`` pair drawn from the target-policy joint law."""

    context: np.ndarray
    reward: float


@dataclass(frozen=True)
class LoggedDataset:
    """Ordered logged triples; the order is the original collection order.

    Parameters
    ----------
    contexts : ndarray, shape (n, d)
    actions : ndarray, shape (n,)
    rewards : ndarray, shape (n,)
    """

    contexts: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __post_init__(self) -> None:
        contexts = _as_context_matrix(self.contexts)
        actions = np.asarray(self.actions, dtype=float).reshape(-1)
        rewards = np.asarray(self.rewards, dtype=float).reshape(-1)
        if not (contexts.shape[0] == actions.shape[0] == rewards.shape[0]):
            raise ValueError("contexts, actions, and rewards must have equal length")
        _check_finite("contexts", contexts)
        _check_finite("actions", actions)
        _check_finite("rewards", rewards)
        object.__setattr__(self, "contexts", _freeze(contexts))
        object.__setattr__(self, "actions", _freeze(actions))
        object.__setattr__(self, "rewards", _freeze(rewards))

    def __len__(self) -> int:
        return self.contexts.shape[0]

    @property
    def context_dim(self) -> int:
        return self.contexts.shape[1]

    def __getitem__(self, i: int) -> LoggedSample:
        return LoggedSample(self.contexts[i], float(self.actions[i]), float(self.rewards[i]))

    def __iter__(self) -> Iterator[LoggedSample]:
        return (self[i] for i in range(len(self)))

    def take(self, indices: np.ndarray) -> "LoggedDataset":
        """Subset by position, preserving the given index order."""
        idx = np.asarray(indices, dtype=int)
        return LoggedDataset(self.contexts[idx], self.actions[idx], self.rewards[idx])

    @staticmethod
    def empty(context_dim: int = 1) -> "LoggedDataset":
        return LoggedDataset(
            np.empty((0, context_dim)), np.empty(0), np.empty(0)
        )


@dataclass(frozen=True)
class TargetDataset:
    """Ordered ``(context, reward)`` pairs from the target-policy joint law."""

    contexts: np.ndarray
    rewards: np.ndarray

    def __post_init__(self) -> None:
        contexts = _as_context_matrix(self.contexts)
        rewards = np.asarray(self.rewards, dtype=float).reshape(-1)
        if contexts.shape[0] != rewards.shape[0]:
            raise ValueError("contexts and rewards must have equal length")
        _check_finite("contexts", contexts)
        _check_finite("rewards", rewards)
        object.__setattr__(self, "contexts", _freeze(contexts))
        object.__setattr__(self, "rewards", _freeze(rewards))

    def __len__(self) -> int:
        return self.contexts.shape[0]

    def __getitem__(self, i: int) -> TargetSample:
        return TargetSample(self.contexts[i], float(self.rewards[i]))

    def __iter__(self) -> Iterator[TargetSample]:
        return (self[i] for i in range(len(self)))


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------

class StochasticPolicy:
    """Conditional density over actions given a context, with sampling.

    Implementations must be vectorized: ``density`` accepts ``(n, d)``
    contexts with ``(n,)`` actions and returns ``(n,)`` nonnegative values
    integrating to one over the action space for every fixed context.
    """

    def density(self, contexts: np.ndarray, actions: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_density(self, contexts: np.ndarray, actions: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.density(contexts, actions))

    def sample(self, contexts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianLinearPolicy(StochasticPolicy):
    """Gaussian policy ``A | s ~ N(slope . s + intercept, variance)``.

    ``variance`` is the variance (sigma squared), not the standard deviation.
    """

    slope: np.ndarray
    intercept: float
    variance: float

    def __post_init__(self) -> None:
        slope = np.asarray(self.slope, dtype=float).reshape(-1)
        _check_finite("slope", slope)
        if not (math.isfinite(self.variance) and self.variance > 0):
            raise ValueError("variance must be positive and finite")
        if not math.isfinite(self.intercept):
            raise ValueError("intercept must be finite")
        object.__setattr__(self, "slope", _freeze(slope))
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "variance", float(self.variance))

    def mean(self, contexts: np.ndarray) -> np.ndarray:
        ctx = _as_context_matrix(contexts)
        return ctx @ self.slope + self.intercept

    def density(self, contexts: np.ndarray, actions: np.ndarray) -> np.ndarray:
        actions = np.asarray(actions, dtype=float)
        z = actions - self.mean(contexts)
        return np.exp(-0.5 * z * z / self.variance) / math.sqrt(2.0 * math.pi * self.variance)

    def log_density(self, contexts: np.ndarray, actions: np.ndarray) -> np.ndarray:
        actions = np.asarray(actions, dtype=float)
        z = actions - self.mean(contexts)
        return -0.5 * z * z / self.variance - 0.5 * math.log(2.0 * math.pi * self.variance)

    def sample(self, contexts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        mu = self.mean(contexts)
        return mu + math.sqrt(self.variance) * rng.standard_normal(mu.shape[0])


# ---------------------------------------------------------------------------
# PAC parameters and intervals
# ---------------------------------------------------------------------------

_LEVEL_TOL = 1e-12


@dataclass(frozen=True)
class PacParams:
    """Miscoverage/confidence pair plus quantile levels and calibration ratio.

    ``eps_up - eps_lo`` must equal ``1 - epsilon`` (to within 1e-12). When the
    quantile levels are omitted, the symmetric pair
    ``(epsilon / 2, 1 - epsilon / 2)`` is used.
    """

    epsilon: float
    delta: float
    gamma: float = 0.5
    eps_lo: float | None = None
    eps_up: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        eps_lo = self.epsilon / 2.0 if self.eps_lo is None else float(self.eps_lo)
        eps_up = 1.0 - self.epsilon / 2.0 if self.eps_up is None else float(self.eps_up)
        if not 0.0 <= eps_lo < eps_up <= 1.0:
            raise ValueError("quantile levels must satisfy 0 <= eps_lo < eps_up <= 1")
        if abs((eps_up - eps_lo) - (1.0 - self.epsilon)) > _LEVEL_TOL:
            raise ValueError("quantile levels must satisfy eps_up - eps_lo = 1 - epsilon")
        object.__setattr__(self, "eps_lo", eps_lo)
        object.__setattr__(self, "eps_up", eps_up)


@dataclass(frozen=True)
class PredictionInterval:
    """Closed interval ``[lo, hi]``; either endpoint may be infinite."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("interval endpoints must not be NaN")
        if lo > hi:
            raise ValueError(f"interval endpoints out of order: [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @staticmethod
    def whole_line() -> "PredictionInterval":
        return PredictionInterval(-math.inf, math.inf)

    def contains(self, r: float) -> bool:
        """Closed membership test."""
        return self.lo <= r <= self.hi

    def length(self) -> float:
        return self.hi - self.lo

    @property
    def is_trivial(self) -> bool:
        return math.isinf(self.lo) and math.isinf(self.hi)


# ---------------------------------------------------------------------------
# dataset operations
# ---------------------------------------------------------------------------

def split_dataset(d: LoggedDataset, gamma: float) -> tuple[LoggedDataset, LoggedDataset]:
    """Split into a training prefix and a calibration tail.

    The calibration set is the *last* ``ceil(gamma * n)`` samples in original
    order; the training set is the remaining prefix. The cut is deterministic:
    samples are i.i.d., so any fixed split is exchangeable, and determinism
    keeps reruns bit-identical.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    n = len(d)
    n_cal = ceil_scaled(gamma * n)
    cut = n - n_cal
    idx = np.arange(n)
    return d.take(idx[:cut]), d.take(idx[cut:])


def _context_header(dim: int) -> list[str]:
    return ["s"] if dim == 1 else [f"s{i + 1}" for i in range(dim)]


def load_csv(path: str) -> LoggedDataset:
    """Read a logged dataset from a ``s,a,r`` (or ``s1..sd,a,r``) CSV file.

    Row order becomes dataset order. A malformed or non-finite row raises a
    ``ValueError`` naming the 1-based line number (the header is line 1).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        if len(header) < 3 or header[-2:] != ["a", "r"]:
            raise ValueError(f"{path}: header must be s,a,r or s1..sd,a,r, got {header!r}")
        dim = len(header) - 2
        if header[:dim] != _context_header(dim):
            raise ValueError(f"{path}: header must be s,a,r or s1..sd,a,r, got {header!r}")
        contexts: list[list[float]] = []
        actions: list[float] = []
        rewards: list[float] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 2:
                raise ValueError(f"{path}: line {lineno}: expected {dim + 2} fields, got {len(row)}")
            try:
                values = [float(v) for v in row]
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-numeric field") from None
            if not all(math.isfinite(v) for v in values):
                raise ValueError(f"{path}: line {lineno}: non-finite value")
            contexts.append(values[:dim])
            actions.append(values[dim])
            rewards.append(values[dim + 1])
    if not contexts:
        return LoggedDataset.empty(dim)
    return LoggedDataset(np.array(contexts), np.array(actions), np.array(rewards))


def save_csv(d: LoggedDataset, path: str) -> None:
    """Write a dataset in the ``load_csv`` schema with round-trip precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_context_header(d.context_dim) + ["a", "r"])
        for i in range(len(d)):
            writer.writerow(
                [repr(float(v)) for v in d.contexts[i]]
                + [repr(float(d.actions[i])), repr(float(d.rewards[i]))]
            )
