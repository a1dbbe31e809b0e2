from __future__ import annotations

import numpy as np
import pytest

from osbench.biasing import BiasTerm, BiasingSpec
from osbench.errors import (
    DegenerateRange,
    InvalidConfig,
    MissingPrediction,
    SingleArm,
    WeightOverflow,
)
from osbench.estimators import BUILTIN_ESTIMATORS, estimate_naive
from osbench.harness import (
    BenchmarkConfig,
    aggregate_by_source,
    complementary_outcome_error,
    ground_truth_effect,
    normalized_error,
    run_benchmark,
    run_trial,
    trials_csv,
)
from osbench.synthetic import SyntheticConfig

from conftest import confounded_study, make_rct


def base_config(**overrides) -> BenchmarkConfig:
    defaults = dict(
        source=SyntheticConfig(n_units=1500, n_covariates=2, tau=2.0,
                               noise_scale=0.5, seed=17),
        bias=BiasingSpec(terms=(BiasTerm("c0", coefficient=1.5),)),
        n_trials=6,
        subsample_cap=1000,
        base_seed=23,
    )
    defaults.update(overrides)
    return BenchmarkConfig(**defaults)


class TestGroundTruth:
    def test_arm_means(self):
        d = make_rct([1, 1, 0, 0], [5.0, 5.0, 3.0, 3.0])
        assert ground_truth_effect(d) == 2.0

    def test_binary_proportions(self):
        t = [1] * 10 + [0] * 10
        y = [1.0] * 7 + [0.0] * 3 + [1.0] * 4 + [0.0] * 6
        assert ground_truth_effect(make_rct(t, y)) == pytest.approx(0.3, abs=1e-12)

    def test_single_arm(self):
        with pytest.raises(SingleArm):
            ground_truth_effect(make_rct([1, 1], [1.0, 2.0]))


class TestNormalizedError:
    def test_basic(self):
        assert normalized_error(7.0, 2.0, 10.0) == 0.5

    def test_zero_at_truth(self):
        assert normalized_error(3.3, 3.3, 5.0) == 0.0

    def test_unit_range_is_raw(self):
        assert normalized_error(0.25, 0.55, 1.0) == pytest.approx(0.3, abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateRange):
            normalized_error(1.0, 0.0, 0.0)


class TestComplementaryError:
    def test_uniform_probabilities_give_plain_mean(self):
        study, _ = confounded_study(n=1200, seed=19, bias_coef=0.0, calibrate=False)
        comp_y = study.complementary.outcome
        preds = comp_y + 0.7
        got = complementary_outcome_error(preds, study)
        # p = 0.5 everywhere: weights all 1, so this is the plain mean error
        assert got == pytest.approx(0.7, abs=1e-9)

    def test_two_unit_hand_value(self):
        from osbench.sampling import ConstructedStudy

        acc = make_rct([1], [0.0], table_kind="observational")
        comp = make_rct([1, 0], [0.0, 0.0], table_kind="observational")
        s = ConstructedStudy(acc, comp, np.array([0.5]), np.array([0.8, 0.2]))
        got = complementary_outcome_error(np.array([1.0, -1.0]), s)
        assert got == pytest.approx((1.0 * 4.0 + (-1.0) * 0.25) / 2.0, abs=1e-12)
        assert got == pytest.approx(1.875, abs=1e-12)

    def test_missing_predictions(self):
        study, _ = confounded_study(n=600, seed=20)
        with pytest.raises(MissingPrediction):
            complementary_outcome_error(np.zeros(3), study)

    def test_weight_overflow(self):
        from osbench.sampling import ConstructedStudy

        acc = make_rct([1, 0], [0.0, 0.0], table_kind="observational")
        comp = make_rct([1], [0.0], table_kind="observational")
        s = ConstructedStudy(acc, comp, np.array([0.5, 0.5]), np.array([1.0 - 1e-9]))
        with pytest.raises(WeightOverflow):
            complementary_outcome_error(np.array([1.0]), s)


class TestRunTrial:
    def test_deterministic(self):
        cfg = base_config()
        a = run_trial(cfg, 3)
        b = run_trial(cfg, 3)
        assert a == b

    def test_unconfounded_naive_near_zero(self):
        cfg = base_config(
            bias=BiasingSpec(terms=(BiasTerm("c0", coefficient=0.0),)),
            calibrate=False, n_trials=12)
        records = [run_trial(cfg, i) for i in range(cfg.n_trials)]
        biases = [r.naive_bias for r in records]
        mean = float(np.mean(biases))
        se = float(np.std(biases, ddof=1) / np.sqrt(len(biases)))
        assert abs(mean) < 4 * se + 1e-9

    def test_degenerate_trials_recorded_not_raised(self):
        # forced all-treated selection: every estimator row carries the error
        cfg = base_config(
            bias=BiasingSpec(terms=(BiasTerm("c0", coefficient=0.0),),
                             intercept=80.0, clip_epsilon=1e-12),
            calibrate=False)
        rec = run_trial(cfg, 0)
        assert rec.degenerate_sample
        assert all(r.status == "DegenerateSample" for r in rec.results)
        assert rec.naive_bias is None


class TestRunBenchmark:
    def test_thirty_trials(self):
        cfg = base_config(n_trials=30, estimators=("naive",))
        report = run_benchmark(cfg)
        assert len(report.records) == 30
        rows = trials_csv(report).strip().splitlines()
        assert len(rows) == 1 + 30 * 1

    def test_same_function_correlates_exactly_one(self):
        BUILTIN_ESTIMATORS["naive_twin"] = estimate_naive
        try:
            cfg = base_config(estimators=("naive", "naive_twin"), n_trials=5)
            report = run_benchmark(cfg)
            assert report.correlation["naive"]["naive_twin"] == 1.0
            assert report.correlation["naive"]["naive"] == 1.0
        finally:
            del BUILTIN_ESTIMATORS["naive_twin"]

    def test_adjusters_beat_naive(self):
        cfg = base_config(
            source=SyntheticConfig(n_units=2500, n_covariates=1, tau=2.0,
                                   noise_scale=0.5, seed=29),
            bias=BiasingSpec(terms=(BiasTerm("c0", coefficient=2.0),)),
            n_trials=10, estimators=("naive", "iptw"))
        report = run_benchmark(cfg)
        assert (report.aggregates["iptw"]["mean_abs_norm_error"]
                < report.aggregates["naive"]["mean_abs_norm_error"])

    def test_reweight_mode_runs_weight_honoring_estimators(self):
        cfg = base_config(mode="reweight", estimators=("naive", "or", "iptw"), n_trials=3)
        report = run_benchmark(cfg)
        assert report.failure_counts["naive"] == 0
        assert report.failure_counts["or"] == 0
        # iptw cannot honor weights: recorded as failures, never aborts
        assert report.failure_counts["iptw"] == 3
        status = {r.estimator: r.status for r in report.records[0].results}
        assert status["iptw"] == "WeightsUnsupported"

    def test_worker_count_does_not_change_bytes(self):
        a = run_benchmark(base_config(n_trials=8))
        b = run_benchmark(base_config(n_trials=8, workers=4))
        assert trials_csv(a) == trials_csv(b)
        assert a.records == b.records
        assert a.aggregates == b.aggregates and a.correlation == b.correlation

    def test_fixed_cap_shares_rows_across_trials(self):
        cfg = base_config(redraw_cap_per_trial=False, n_trials=3)
        report = run_benchmark(cfg)
        truths = {r.truth for r in report.records}
        assert len(truths) == 1  # same capped table, same ground truth

    def test_redrawn_cap_varies_across_trials(self):
        cfg = base_config(n_trials=3)
        report = run_benchmark(cfg)
        truths = {r.truth for r in report.records}
        assert len(truths) > 1

    def test_invalid_configs(self):
        with pytest.raises(InvalidConfig):
            base_config(n_trials=0)
        with pytest.raises(InvalidConfig):
            base_config(subsample_cap=10)
        with pytest.raises(InvalidConfig):
            base_config(estimators=("bogus",))


class TestSanityInvariants:
    def test_unbiased_rct_errors_below_confounded_naive(self):
        # every estimator on the unconfounded sample beats naive on the
        # confounded one
        confounded = run_benchmark(base_config(
            bias=BiasingSpec(terms=(BiasTerm("c0", coefficient=2.0),)),
            n_trials=10))
        naive_confounded = confounded.aggregates["naive"]["mean_abs_norm_error"]
        flat = run_benchmark(base_config(
            bias=BiasingSpec(terms=(BiasTerm("c0", coefficient=0.0),)),
            calibrate=False, n_trials=10))
        for est, agg in flat.aggregates.items():
            assert agg["mean_abs_norm_error"] < naive_confounded, est

    def test_correct_specification_absolute_bounds(self):
        # adjusting estimators stay within a tenth of the effect while the
        # naive baseline is off by more than three tenths
        cfg = BenchmarkConfig(
            source=SyntheticConfig(n_units=5000, n_covariates=1, tau=2.0,
                                   outcome_coefficients=(2.0,), noise_scale=0.5,
                                   seed=71),
            bias=BiasingSpec(terms=(BiasTerm("c0", coefficient=2.0),)),
            estimators=("naive", "iptw", "or", "aipw"),
            n_trials=20, subsample_cap=5000, base_seed=72)
        report = run_benchmark(cfg)
        span = report.metadata["outcome_range"]
        tau = 2.0
        bound = 0.1 * tau
        for est in ("iptw", "or", "aipw"):
            raw = report.aggregates[est]["mean_abs_norm_error"] * span
            assert raw < bound, (est, raw, bound)
        naive_raw = report.aggregates["naive"]["mean_abs_norm_error"] * span
        assert naive_raw > 3 * bound

    def test_self_normalized_complementary_option(self):
        from osbench.sampling import ConstructedStudy

        acc = make_rct([1], [0.0], table_kind="observational")
        comp = make_rct([1, 0], [0.0, 0.0], table_kind="observational")
        s = ConstructedStudy(acc, comp, np.array([0.5]), np.array([0.8, 0.2]))
        preds = np.array([1.0, -1.0])
        plain = complementary_outcome_error(preds, s)
        self_norm = complementary_outcome_error(preds, s, self_normalized=True)
        assert plain == pytest.approx(3.75 / 2, abs=1e-12)
        assert self_norm == pytest.approx(3.75 / 4.25, abs=1e-12)

    def test_psm_att_builtin_id(self):
        cfg = base_config(estimators=("psm", "psm_att"), n_trials=2)
        report = run_benchmark(cfg)
        assert report.failure_counts["psm_att"] == 0


class TestAggregateBySource:
    def test_single_report_identity(self):
        cfg = base_config(n_trials=4, estimators=("naive",))
        report = run_benchmark(cfg)
        summary = aggregate_by_source([("only", report)])
        assert summary["overall"]["naive"]["mean_abs_norm_error"] == pytest.approx(
            report.aggregates["naive"]["mean_abs_norm_error"], abs=1e-12)

    def test_balanced_pooling_averages_means(self):
        r1 = run_benchmark(base_config(n_trials=4, estimators=("naive",), base_seed=1))
        r2 = run_benchmark(base_config(n_trials=4, estimators=("naive",), base_seed=2))
        summary = aggregate_by_source([("a", r1), ("b", r2)])
        m1 = r1.aggregates["naive"]["mean_abs_norm_error"]
        m2 = r2.aggregates["naive"]["mean_abs_norm_error"]
        assert summary["overall"]["naive"]["mean_abs_norm_error"] == pytest.approx(
            (m1 + m2) / 2, abs=1e-12)

    def test_unbalanced_pooling_is_trial_weighted(self):
        r1 = run_benchmark(base_config(n_trials=2, estimators=("naive",), base_seed=1))
        r2 = run_benchmark(base_config(n_trials=6, estimators=("naive",), base_seed=2))
        summary = aggregate_by_source([("a", r1), ("b", r2)])
        flat = []
        for rep in (r1, r2):
            for rec in rep.records:
                flat.append(rec.results[0].norm_error)
        assert summary["overall"]["naive"]["mean_abs_norm_error"] == pytest.approx(
            float(np.mean(flat)), abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(InvalidConfig):
            aggregate_by_source([])
