import math

import numpy as np
import pytest

from pacope.behavior import (
    FinitePolicyClass,
    PolicyFitConfig,
    estimate_weight_error,
    finite_policy_class,
    fit_gaussian_policy,
    mle_policy,
    pacopp_unknown,
)
from pacope.calibrate import pacopp_known, predict
from pacope.core import GaussianLinearPolicy, LoggedDataset, PacParams, child_rng
from pacope.quantile import QuantileTrainConfig
from pacope.synthenv import DEFAULT_ENV, sample_logged

ENV = DEFAULT_ENV
PE = ENV.target_policy()
PB = ENV.behavior_policy()
PARAMS = PacParams(0.2, 0.1, 0.5)
PROBE = np.linspace(-10.0, 10.0, 41).reshape(-1, 1)


def _context_sampler(m, rng):
    return (2.0 * rng.standard_normal(m)).reshape(-1, 1)


class TestMlePolicy:
    def test_selects_truth_against_impostor(self):
        impostor = GaussianLinearPolicy(np.array([0.25]), 5.0, 4.0)
        pclass = FinitePolicyClass((PB, impostor), ratio_bound=10.0)
        picks = sum(
            mle_policy(pclass, sample_logged(200, child_rng(777 + seed, 0))) is PB
            for seed in range(100)
        )
        assert picks >= 99

    def test_singleton_class(self):
        pclass = FinitePolicyClass((PB,), ratio_bound=2.0)
        assert mle_policy(pclass, sample_logged(10, child_rng(1))) is PB

    def test_empty_dataset_ties_to_first(self):
        other = GaussianLinearPolicy(np.array([0.1]), 0.0, 4.0)
        pclass = FinitePolicyClass((other, PB), ratio_bound=10.0)
        assert mle_policy(pclass, LoggedDataset.empty()) is other

    def test_order_invariance(self):
        d = sample_logged(300, child_rng(2))
        shuffled = d.take(np.random.default_rng(3).permutation(len(d)))
        members = tuple(
            GaussianLinearPolicy(np.array([s]), 0.0, 4.0) for s in (0.1, 0.25, 0.4)
        )
        pclass = FinitePolicyClass(members, ratio_bound=10.0)
        assert mle_policy(pclass, d) is mle_policy(pclass, shuffled)

    def test_all_zero_likelihood_is_an_error(self):
        from pacope.core import StochasticPolicy

        class _Nowhere(StochasticPolicy):
            def density(self, contexts, actions):
                return np.zeros(np.asarray(actions).shape[0])

            def sample(self, contexts, rng):
                return np.zeros(np.shape(contexts)[0])

        pclass = FinitePolicyClass((_Nowhere(), _Nowhere()), ratio_bound=1.0)
        with pytest.raises(ValueError, match="zero likelihood"):
            mle_policy(pclass, sample_logged(5, child_rng(4)))


class TestFitGaussianPolicy:
    def test_recovers_behavior_policy(self):
        d = sample_logged(5000, child_rng(88, 0))
        policy = fit_gaussian_policy(d, 0.05, PE.variance)
        # Oracle: closed-form least squares plus residual variance.
        x1 = np.hstack([np.ones((len(d), 1)), d.contexts])
        w_ols, *_ = np.linalg.lstsq(x1, d.actions, rcond=None)
        resid_var = float(np.mean((d.actions - x1 @ w_ols) ** 2))
        assert policy.slope[0] == pytest.approx(w_ols[1], abs=1e-3)
        assert policy.variance == pytest.approx(resid_var, abs=1e-2)
        assert abs(policy.slope[0] - 0.25) < 0.03
        assert abs(policy.variance - 4.0) < 0.3

    def test_variance_clamp_on_constant_actions(self):
        contexts = np.linspace(-1, 1, 50).reshape(-1, 1)
        d = LoggedDataset(contexts, np.zeros(50), np.zeros(50))
        policy = fit_gaussian_policy(d, 0.05, target_variance=1.0)
        assert policy.variance == pytest.approx(1.05)

    def test_two_samples_fit(self):
        d = LoggedDataset(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]), np.zeros(2))
        fit_gaussian_policy(d, 0.05, 0.5)

    def test_too_small(self):
        d = LoggedDataset(np.array([[0.0]]), np.array([0.0]), np.array([0.0]))
        with pytest.raises(ValueError):
            fit_gaussian_policy(d, 0.05, 1.0)


class TestFinitePolicyClass:
    def test_bound_covers_all_members(self):
        members = (
            PB,
            GaussianLinearPolicy(np.array([0.25]), 1.0, 4.0),
            GaussianLinearPolicy(np.array([0.25]), 0.0, 6.0),
        )
        actions = np.linspace(-15, 15, 41)
        pclass = finite_policy_class(members, PE, PROBE, probe_actions=actions)
        for member in members:
            ratio = PE.density(PROBE, actions) / member.density(PROBE, actions)
            assert np.all(ratio <= pclass.ratio_bound * (1 + 1e-12))

    def test_non_empty_required(self):
        with pytest.raises(ValueError):
            FinitePolicyClass((), ratio_bound=2.0)


class TestEstimateWeightError:
    def test_exact_policy_gives_zero(self):
        report = estimate_weight_error(PB, PB, PE, 1000, child_rng(4), _context_sampler)
        assert report.delta_w_hat == 0.0

    def test_matches_quadrature_oracle(self):
        # Variance-mismatched estimate; oracle by Gauss-Hermite quadrature
        # of |w_hat - w| against the logging law.
        pbhat = GaussianLinearPolicy(np.array([0.25]), 0.0, 6.0)
        xs, ws = np.polynomial.hermite_e.hermegauss(201)
        node_w = ws / ws.sum()
        total = 0.0
        for si, swi in zip(2.0 * xs, node_w):
            a = si / 4 + 2.0 * xs
            ctx = np.full((a.size, 1), si)
            w = PE.density(ctx, a) / PB.density(ctx, a)
            w_hat = PE.density(ctx, a) / pbhat.density(ctx, a)
            total += swi * float(np.sum(node_w * np.abs(w_hat - w)))
        mc = 10**6
        report = estimate_weight_error(pbhat, PB, PE, mc, child_rng(31, 0), _context_sampler)
        # Standard error estimated from an independent replicate.
        rng = child_rng(31, 1)
        ctx = _context_sampler(20000, rng)
        actions = PB.sample(ctx, rng)
        values = np.abs(
            PE.density(ctx, actions) / pbhat.density(ctx, actions)
            - PE.density(ctx, actions) / PB.density(ctx, actions)
        )
        se = float(values.std()) / math.sqrt(mc)
        assert abs(report.delta_w_hat - total) <= 3 * se

    def test_mc_domain(self):
        with pytest.raises(ValueError):
            estimate_weight_error(PB, PB, PE, 0, child_rng(0), _context_sampler)


class TestPacoppUnknown:
    QCFG = QuantileTrainConfig(learning_rate=0.1, epochs=300)

    def test_accept_all_case_matches_known_pipeline_exactly(self):
        # With pi_e = pi_b forced as the estimate, the ratio is one, both
        # algorithms accept every sample, and their split/fit/threshold
        # stages coincide exactly.
        d = sample_logged(1000, child_rng(40, 0))
        pcfg = PolicyFitConfig(method="fixed", fixed_policy=PB)
        unknown = pacopp_unknown(d, PB, PARAMS, pcfg, self.QCFG, child_rng(40, 1))
        known = pacopp_known(d, PB, PB, PARAMS, self.QCFG, child_rng(40, 1))
        assert unknown.threshold == known.threshold
        assert unknown.diagnostics.n_rs == known.diagnostics.n_rs == 1000
        grid = np.linspace(-4, 4, 33)
        assert np.array_equal(
            unknown.interval_batch(grid)[0], known.interval_batch(grid)[0]
        )

    def test_forced_truth_keeps_pac_validity(self):
        # Estimated-policy pipeline with the true policy plugged in: the
        # guarantee of the known-policy analysis applies (80 runs, 3 sigma).
        from pacope.synthenv import sample_target

        hits = 0
        runs = 80
        pcfg = PolicyFitConfig(method="fixed", fixed_policy=PB)
        for seed in range(runs):
            d = sample_logged(2000, child_rng(6000 + seed, 0))
            pred = pacopp_unknown(d, PE, PARAMS, pcfg, self.QCFG, child_rng(6000 + seed, 1))
            test = sample_target(10000, child_rng(6000 + seed, 2))
            lo, hi = pred.interval_batch(test.contexts)
            miss = float(np.mean((test.rewards < lo) | (test.rewards > hi)))
            hits += miss <= PARAMS.epsilon
        assert hits / runs >= 0.9 - 3 * math.sqrt(0.09 / runs)

    def test_empty_dataset_trivial(self):
        pred = pacopp_unknown(
            LoggedDataset.empty(), PE, PARAMS, PolicyFitConfig(), self.QCFG, child_rng(0)
        )
        assert pred.diagnostics.trivial
        assert predict(pred, 0.0).is_trivial

    def test_gaussian_estimate_records_clamp(self):
        contexts = np.linspace(-1, 1, 200).reshape(-1, 1)
        d = LoggedDataset(contexts, np.zeros(200), np.zeros(200))
        pred = pacopp_unknown(d, PE, PARAMS, PolicyFitConfig(), self.QCFG, child_rng(41))
        assert pred.diagnostics.variance_clamped

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PolicyFitConfig(method="mle")
        with pytest.raises(ValueError):
            PolicyFitConfig(method="fixed")
        with pytest.raises(ValueError):
            PolicyFitConfig(method="nn")


class TestTheorem5Frequency:
    def test_coverage_within_estimated_weight_error(self):
        # Fraction of runs with miscoverage <= eps + estimated weight error
        # must respect the nominal confidence (500 runs, 3-sigma slack).
        from pacope.bench import BenchConfig, run_unknown_sweep

        cfg = BenchConfig(runs=500, n_jobs=2, weight_error_mc=100000)
        sweep = run_unknown_sweep(cfg, 20260810, method="gaussian")
        miscoverage = np.array([t.miscoverage for t in sweep.trials])
        delta_w = np.array([t.delta_w_hat for t in sweep.trials])
        assert np.all(np.isfinite(delta_w))
        freq = float(np.mean(miscoverage <= 0.2 + delta_w))
        assert freq >= 0.9 - 3 * math.sqrt(0.09 / 500)
