import numpy as np
import pytest

from pacope.core import PacParams, child_rng
from pacope.quantile import (
    QuantilePairModel,
    QuantileTrainConfig,
    fit_quantile_pair,
    pinball_loss,
    trivial_quantile_model,
)
from pacope.rejection import RsDataset
from pacope.synthenv import oracle_quantile, sample_target

PARAMS_10_90 = PacParams(0.2, 0.1, eps_lo=0.1, eps_up=0.9)


def _as_train(target):
    return RsDataset(target.contexts, target.rewards, np.arange(len(target)))


class TestPinballLoss:
    def test_zero_residual(self):
        assert pinball_loss(0.0, 0.3) == 0.0

    def test_positive_residual(self):
        assert pinball_loss(2.0, 0.1) == pytest.approx(0.2)

    def test_negative_residual(self):
        assert pinball_loss(-2.0, 0.1) == pytest.approx(1.8)

    def test_level_domain(self):
        with pytest.raises(ValueError):
            pinball_loss(1.0, 0.0)
        with pytest.raises(ValueError):
            pinball_loss(1.0, 1.0)

    def test_nonnegative_and_zero_only_at_zero(self):
        u = np.linspace(-5, 5, 101)
        losses = pinball_loss(u, 0.37)
        assert np.all(losses >= 0)
        assert np.all((losses == 0) == (u == 0))


class TestAffineFit:
    def test_constant_rewards_collapse_quantiles(self):
        train = RsDataset(np.linspace(-2, 2, 50).reshape(-1, 1), np.full(50, 3.0), np.arange(50))
        cfg = QuantileTrainConfig(learning_rate=0.5, epochs=400)
        model = fit_quantile_pair(train, cfg, PARAMS_10_90)
        for s in (-1.5, 0.0, 2.0):
            assert abs(model.q_lo(s) - 3.0) < 1e-3
            assert abs(model.q_up(s) - 3.0) < 1e-3

    def test_recovers_oracle_quantiles_of_mixture(self):
        target = sample_target(5000, child_rng(77, 0))
        cfg = QuantileTrainConfig(learning_rate=0.1, epochs=2000)
        model = fit_quantile_pair(_as_train(target), cfg, PARAMS_10_90)
        assert abs(model.q_lo(0.0) - oracle_quantile(0.0, 0.1)) < 0.4
        assert abs(model.q_up(0.0) - oracle_quantile(0.0, 0.9)) < 0.4

    def test_heldout_calibration(self):
        # Fraction of held-out rewards below the fitted lower quantile stays
        # within 0.03 of the nominal level.
        target = sample_target(5000, child_rng(77, 0))
        cfg = QuantileTrainConfig(learning_rate=0.1, epochs=2000)
        model = fit_quantile_pair(_as_train(target), cfg, PARAMS_10_90)
        held = sample_target(10000, child_rng(77, 1))
        lo, up = model.quantiles(held.contexts)
        assert abs(float(np.mean(held.rewards < lo)) - 0.1) < 0.03
        assert abs(float(np.mean(held.rewards > up)) - 0.1) < 0.03

    def test_too_small_training_set(self):
        train = RsDataset(np.zeros((1, 1)), np.zeros(1), np.zeros(1, dtype=int))
        with pytest.raises(ValueError, match="insufficient training data"):
            fit_quantile_pair(train, QuantileTrainConfig(), PARAMS_10_90)

    def test_loss_history_non_increasing(self):
        target = sample_target(400, child_rng(5, 0))
        model = fit_quantile_pair(
            _as_train(target), QuantileTrainConfig(learning_rate=0.3, epochs=300), PARAMS_10_90
        )
        for losses in model.train_losses:
            assert np.all(np.diff(losses) <= 1e-9)


class TestMlpFit:
    def test_requires_rng(self):
        target = sample_target(50, child_rng(6, 0))
        with pytest.raises(ValueError, match="rng"):
            fit_quantile_pair(_as_train(target), QuantileTrainConfig(model_kind="mlp"), PARAMS_10_90)

    def test_fits_and_orders_levels(self):
        target = sample_target(600, child_rng(6, 0))
        cfg = QuantileTrainConfig(model_kind="mlp", hidden_width=16, learning_rate=0.05, epochs=400)
        model = fit_quantile_pair(_as_train(target), cfg, PARAMS_10_90, child_rng(6, 1))
        grid = np.linspace(-4, 4, 101).reshape(-1, 1)
        lo, up = model.quantiles(grid)
        assert np.all(lo <= up)
        assert model.q_lo(0.0) < model.q_up(0.0)
        for losses in model.train_losses:
            assert np.all(np.diff(losses) <= 1e-9)

    def test_deterministic_given_stream(self):
        target = sample_target(200, child_rng(7, 0))
        cfg = QuantileTrainConfig(model_kind="mlp", hidden_width=8, epochs=50)
        m1 = fit_quantile_pair(_as_train(target), cfg, PARAMS_10_90, child_rng(7, 1))
        m2 = fit_quantile_pair(_as_train(target), cfg, PARAMS_10_90, child_rng(7, 1))
        grid = np.linspace(-2, 2, 17)
        assert np.array_equal(m1.quantiles(grid)[0], m2.quantiles(grid)[0])


class TestCrossingFix:
    def test_no_crossing_on_probe_grid(self):
        target = sample_target(300, child_rng(8, 0))
        model = fit_quantile_pair(
            _as_train(target), QuantileTrainConfig(learning_rate=0.2, epochs=200), PARAMS_10_90
        )
        grid = np.linspace(-30, 30, 1000).reshape(-1, 1)
        lo, up = model.quantiles(grid)
        assert np.all(lo <= up)

    def test_midpoint_replacement(self):
        # Force crossing affine weights; both sides must collapse to the mean.
        model = QuantilePairModel(
            "affine",
            (np.array([1.0, 0.0]),),
            (np.array([-1.0, 0.0]),),
            (0.1, 0.9),
        )
        lo, up = model.quantiles(np.array([[0.0]]))
        assert lo[0] == up[0] == 0.0


class TestSerialization:
    def test_affine_round_trip_exact(self):
        target = sample_target(100, child_rng(9, 0))
        model = fit_quantile_pair(
            _as_train(target), QuantileTrainConfig(epochs=50), PARAMS_10_90
        )
        back = QuantilePairModel.load(model.dump())
        grid = np.linspace(-3, 3, 41)
        assert np.array_equal(back.quantiles(grid)[0], model.quantiles(grid)[0])
        assert np.array_equal(back.quantiles(grid)[1], model.quantiles(grid)[1])
        assert back.levels == model.levels

    def test_mlp_round_trip_exact(self):
        target = sample_target(100, child_rng(9, 0))
        cfg = QuantileTrainConfig(model_kind="mlp", hidden_width=4, epochs=30)
        model = fit_quantile_pair(_as_train(target), cfg, PARAMS_10_90, child_rng(9, 1))
        back = QuantilePairModel.load(model.dump())
        grid = np.linspace(-3, 3, 41)
        assert np.array_equal(back.quantiles(grid)[0], model.quantiles(grid)[0])

    def test_trivial_model_is_zero(self):
        model = trivial_quantile_model((0.1, 0.9))
        lo, up = model.quantiles(np.array([[5.0]]))
        assert lo[0] == 0.0 and up[0] == 0.0


class TestConfigValidation:
    @pytest.mark.parametrize("kwargs", [
        dict(model_kind="forest"),
        dict(epochs=0),
        dict(learning_rate=0.0),
        dict(model_kind="mlp", hidden_width=0),
    ])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            QuantileTrainConfig(**kwargs)
