"""Conditional-quantile estimation of reward given context via pinball loss.

Two model families are provided: an affine model (the deterministic default
used throughout the benchmarks) and a one-hidden-layer network with a smooth
ramp (softplus) activation. Both are trained by full-batch (sub)gradient
descent whose learning rate is halved whenever a step would increase the
training loss; the step is rejected, so the recorded loss sequence is
non-increasing by construction.

Quantile crossing is repaired pointwise at evaluation time: wherever the
fitted lower quantile exceeds the upper one, both are replaced by their
midpoint, so the induced interval family stays well-formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import PacParams, _as_context_matrix
from .rejection import RsDataset

__all__ = [
    "QuantileTrainConfig",
    "QuantilePairModel",
    "pinball_loss",
    "fit_quantile_pair",
    "trivial_quantile_model",
]

_MODEL_KINDS = ("affine", "mlp")


@dataclass(frozen=True)
class QuantileTrainConfig:
    """Training knobs for the quantile fitter.

    The affine model starts from zero weights; the network uses a symmetric
    small-range initialization drawn from the caller's stream. Training is
    full-batch; ``learning_rate`` is the initial step size of the
    halving-on-increase schedule.
    """

    model_kind: str = "affine"
    hidden_width: int = 32
    learning_rate: float = 1e-2
    epochs: int = 500

    def __post_init__(self) -> None:
        if self.model_kind not in _MODEL_KINDS:
            raise ValueError(f"model_kind must be one of {_MODEL_KINDS}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.model_kind == "mlp" and self.hidden_width < 1:
            raise ValueError("hidden_width must be >= 1")


def pinball_loss(u: float | np.ndarray, level: float) -> float | np.ndarray:
    """Check-function loss: ``u * level`` if ``u >= 0`` else ``u * (level - 1)``."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    arr = np.asarray(u, dtype=float)
    out = np.where(arr >= 0.0, arr * level, arr * (level - 1.0))
    return float(out) if np.isscalar(u) or arr.ndim == 0 else out


def _pinball_mean(resid: np.ndarray, level: float) -> float:
    return float(np.mean(np.where(resid >= 0.0, resid * level, resid * (level - 1.0))))


def _pinball_slope(resid: np.ndarray, level: float) -> np.ndarray:
    # Subgradient of the check function; the kink at zero takes the level.
    return np.where(resid >= 0.0, level, level - 1.0)


def _fit_affine(x1: np.ndarray, y: np.ndarray, level: float, lr: float, epochs: int):
    n = x1.shape[0]
    w = np.zeros(x1.shape[1])
    resid = y.copy()
    cur = _pinball_mean(resid, level)
    losses = np.empty(epochs)
    for t in range(epochs):
        g = _pinball_slope(resid, level)
        grad = -(x1.T @ g) / n
        cand = w - lr * grad
        resid_cand = y - x1 @ cand
        new = _pinball_mean(resid_cand, level)
        if new > cur:
            lr *= 0.5
        else:
            w, resid, cur = cand, resid_cand, new
        losses[t] = cur
    return w, losses


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _mlp_forward(params, x):
    w1, b1, w2, b2 = params
    z = x @ w1 + b1
    return _softplus(z) @ w2 + b2, z


def _fit_mlp(x, y, level, lr, epochs, width, rng):
    n, d = x.shape
    params = [
        rng.uniform(-0.1, 0.1, size=(d, width)),
        rng.uniform(-0.1, 0.1, size=width),
        rng.uniform(-0.1, 0.1, size=width),
        rng.uniform(-0.1, 0.1),
    ]
    out, z = _mlp_forward(params, x)
    cur = _pinball_mean(y - out, level)
    losses = np.empty(epochs)
    for t in range(epochs):
        resid = y - out
        dout = -_pinball_slope(resid, level) / n
        h = _softplus(z)
        dw2 = h.T @ dout
        db2 = dout.sum()
        dz = np.outer(dout, params[2]) * expit(z)
        dw1 = x.T @ dz
        db1 = dz.sum(axis=0)
        cand = [
            params[0] - lr * dw1,
            params[1] - lr * db1,
            params[2] - lr * dw2,
            params[3] - lr * db2,
        ]
        out_cand, z_cand = _mlp_forward(cand, x)
        new = _pinball_mean(y - out_cand, level)
        if new > cur:
            lr *= 0.5
        else:
            params, out, z, cur = cand, out_cand, z_cand, new
        losses[t] = cur
    return params, losses


@dataclass(frozen=True)
class QuantilePairModel:
    """Fitted lower/upper conditional-quantile functions.

    ``params_lo`` / ``params_up`` hold the affine weight vector or the network
    parameter list depending on ``kind``. Evaluation applies the midpoint
    crossing fix, so ``quantiles`` always returns ``lo <= up`` pointwise.
    """

    kind: str
    params_lo: tuple
    params_up: tuple
    levels: tuple[float, float]
    train_losses: tuple[np.ndarray, np.ndarray] | None = None

    def _raw(self, params: tuple, ctx: np.ndarray) -> np.ndarray:
        if self.kind == "affine":
            (w,) = params
            x1 = np.hstack([np.ones((ctx.shape[0], 1)), ctx])
            return x1 @ w
        out, _ = _mlp_forward(params, ctx)
        return out

    def quantiles(self, contexts) -> tuple[np.ndarray, np.ndarray]:
        """Evaluate ``(q_lo, q_up)`` with the midpoint crossing fix applied."""
        ctx = _as_context_matrix(contexts)
        lo = self._raw(self.params_lo, ctx)
        up = self._raw(self.params_up, ctx)
        crossed = lo > up
        if np.any(crossed):
            mid = 0.5 * (lo[crossed] + up[crossed])
            lo[crossed] = mid
            up[crossed] = mid
        return lo, up

    def q_lo(self, s) -> float:
        return float(self.quantiles(s)[0][0])

    def q_up(self, s) -> float:
        return float(self.quantiles(s)[1][0])

    def dump(self) -> str:
        """Flat text serialization, round-trip exact."""
        lines = [f"kind={self.kind}", f"eps_lo={self.levels[0]!r}", f"eps_up={self.levels[1]!r}"]
        for tag, params in (("lo", self.params_lo), ("up", self.params_up)):
            for i, arr in enumerate(params):
                flat = np.asarray(arr, dtype=float).reshape(-1)
                shape = ",".join(str(v) for v in np.shape(arr))
                values = " ".join(repr(float(v)) for v in flat)
                lines.append(f"{tag}.{i}.shape={shape}")
                lines.append(f"{tag}.{i}.values={values}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def load(text: str) -> "QuantilePairModel":
        fields: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            fields[key] = value
        kind = fields["kind"]
        levels = (float(fields["eps_lo"]), float(fields["eps_up"]))
        params: dict[str, list] = {"lo": [], "up": []}
        for tag in ("lo", "up"):
            i = 0
            while f"{tag}.{i}.values" in fields:
                shape = tuple(
                    int(v) for v in fields[f"{tag}.{i}.shape"].split(",") if v != ""
                )
                raw = fields[f"{tag}.{i}.values"]
                flat = np.array([float(v) for v in raw.split()] if raw else [], dtype=float)
                arr = flat.reshape(shape) if shape else float(flat[0])
                params[tag].append(arr)
                i += 1
        return QuantilePairModel(kind, tuple(params["lo"]), tuple(params["up"]), levels)


def trivial_quantile_model(levels: tuple[float, float], context_dim: int = 1) -> QuantilePairModel:
    """Constant-zero quantile pair, used by degenerate calibration paths."""
    w = np.zeros(context_dim + 1)
    return QuantilePairModel("affine", (w,), (w.copy(),), levels)


def fit_quantile_pair(
    train: RsDataset,
    cfg: QuantileTrainConfig,
    params: PacParams,
    rng: np.random.Generator | None = None,
) -> QuantilePairModel:
    """Fit the lower and upper conditional quantiles on accepted pairs.

    The levels are ``(params.eps_lo, params.eps_up)``. The network model
    requires a stream for its initialization; the affine model is fully
    deterministic.
    """
    if len(train) < 2:
        raise ValueError("insufficient training data: need at least 2 samples")
    eps_lo, eps_up = params.eps_lo, params.eps_up
    for level in (eps_lo, eps_up):
        if not 0.0 < level < 1.0:
            raise ValueError("quantile levels must lie in (0, 1)")
    x = _as_context_matrix(train.contexts)
    y = np.asarray(train.rewards, dtype=float)
    if cfg.model_kind == "affine":
        x1 = np.hstack([np.ones((x.shape[0], 1)), x])
        w_lo, losses_lo = _fit_affine(x1, y, eps_lo, cfg.learning_rate, cfg.epochs)
        w_up, losses_up = _fit_affine(x1, y, eps_up, cfg.learning_rate, cfg.epochs)
        return QuantilePairModel(
            "affine", (w_lo,), (w_up,), (eps_lo, eps_up), (losses_lo, losses_up)
        )
    if rng is None:
        raise ValueError("the network model requires an rng for initialization")
    p_lo, losses_lo = _fit_mlp(x, y, eps_lo, cfg.learning_rate, cfg.epochs, cfg.hidden_width, rng)
    p_up, losses_up = _fit_mlp(x, y, eps_up, cfg.learning_rate, cfg.epochs, cfg.hidden_width, rng)
    return QuantilePairModel(
        "mlp", tuple(p_lo), tuple(p_up), (eps_lo, eps_up), (losses_lo, losses_up)
    )
