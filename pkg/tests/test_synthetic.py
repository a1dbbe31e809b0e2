from __future__ import annotations

import numpy as np
import pytest
from scipy.special import expit

from osbench.errors import InvalidConfig, NotApoTable
from osbench.harness import ground_truth_effect
from osbench.sampling import apo_to_rct
from osbench.synthetic import SyntheticConfig, expected_effect, gen_apo, true_effect


class TestGenApo:
    def test_null_effect_zero_noise(self):
        cfg = SyntheticConfig(n_units=200, tau=0.0, noise_scale=0.0, seed=1)
        apo = gen_apo(cfg)
        assert np.array_equal(apo.values("y0"), apo.values("y1"))

    def test_constant_effect_zero_noise_exact(self):
        cfg = SyntheticConfig(n_units=500, tau=2.0, noise_scale=0.0, seed=2)
        apo = gen_apo(cfg)
        assert float(np.mean(apo.values("y1") - apo.values("y0"))) == pytest.approx(2.0, abs=1e-12)

    def test_constant_effect_with_noise(self):
        n = 4000
        noise = 1.0
        cfg = SyntheticConfig(n_units=n, tau=2.0, noise_scale=noise, seed=3)
        apo = gen_apo(cfg)
        tol = 4 * noise * np.sqrt(2.0 / n)
        assert abs(float(np.mean(apo.values("y1") - apo.values("y0"))) - 2.0) < tol

    def test_seed_determinism(self):
        cfg = SyntheticConfig(n_units=300, seed=9)
        assert gen_apo(cfg).equals(gen_apo(cfg))

    def test_categorical_covariates(self):
        cfg = SyntheticConfig(n_units=400, n_covariates=1, n_categorical=1,
                              n_levels=4, seed=4)
        apo = gen_apo(cfg)
        assert apo.is_categorical("f0")
        assert set(apo.values("f0").tolist()) <= {0, 1, 2, 3}

    def test_invalid_configs(self):
        with pytest.raises(InvalidConfig):
            SyntheticConfig(n_units=0)
        with pytest.raises(InvalidConfig):
            SyntheticConfig(family="mystery")
        with pytest.raises(InvalidConfig):
            SyntheticConfig(noise_scale=-1.0)
        with pytest.raises(InvalidConfig):
            SyntheticConfig(outcome_coefficients=(1.0,), n_covariates=2)


class TestTrueEffect:
    def test_null(self):
        cfg = SyntheticConfig(n_units=200, tau=0.0, noise_scale=0.0, seed=5)
        assert true_effect(gen_apo(cfg)) == 0.0

    def test_linear_exact(self):
        cfg = SyntheticConfig(n_units=200, tau=2.0, noise_scale=0.0, seed=6)
        assert true_effect(gen_apo(cfg)) == pytest.approx(2.0, abs=1e-12)

    def test_requires_apo(self):
        cfg = SyntheticConfig(n_units=200, seed=6)
        rct = apo_to_rct(gen_apo(cfg), np.random.default_rng(0))
        with pytest.raises(NotApoTable):
            true_effect(rct)

    def test_logistic_closed_form_matches_row_oracle(self):
        cfg = SyntheticConfig(n_units=500, n_covariates=2, family="logistic",
                              tau=0.9, intercept=-0.3, seed=7)
        apo = gen_apo(cfg)
        # independent row-by-row probability average
        rows = []
        for i in range(apo.n_rows):
            base = -0.3 + apo.values("c0")[i] + apo.values("c1")[i]
            rows.append(float(expit(base + 0.9) - expit(base)))
        oracle = sum(rows) / len(rows)
        assert expected_effect(cfg, apo) == pytest.approx(oracle, abs=1e-9)

    def test_logistic_sample_effect_near_closed_form(self):
        cfg = SyntheticConfig(n_units=20_000, n_covariates=1, family="logistic",
                              tau=1.0, seed=8)
        apo = gen_apo(cfg)
        # binomial noise: sd of the mean difference is below sqrt(2/(4n))
        assert abs(true_effect(apo) - expected_effect(cfg, apo)) < 4 * np.sqrt(0.5 / 20_000)

    def test_heterogeneous_effect(self):
        cfg = SyntheticConfig(n_units=3000, n_covariates=1, tau=1.0,
                              tau_coefficients=(0.5,), noise_scale=0.0, seed=9)
        apo = gen_apo(cfg)
        per_unit = apo.values("y1") - apo.values("y0")
        oracle = 1.0 + 0.5 * apo.values("c0")
        assert np.allclose(per_unit, oracle, atol=1e-12)


class TestPipelines:
    def test_rct_conversion_recovers_effect(self):
        # generated table -> randomized conversion -> arm-means formula
        cfg = SyntheticConfig(n_units=2000, tau=2.0, noise_scale=1.0, seed=10)
        apo = gen_apo(cfg)
        truth = true_effect(apo)
        estimates = []
        for seed in range(100):
            rct = apo_to_rct(apo, np.random.default_rng(1000 + seed))
            estimates.append(ground_truth_effect(rct))
        sd = float(np.std(estimates, ddof=1))
        assert abs(float(np.mean(estimates)) - truth) < 4 * sd / np.sqrt(100)

    def test_zero_coefficients_remove_dependence(self):
        cfg = SyntheticConfig(n_units=5000, n_covariates=1,
                              outcome_coefficients=(0.0,), seed=11)
        apo = gen_apo(cfg)
        r = np.corrcoef(apo.values("c0"), apo.values("y0"))[0, 1]
        assert abs(r) < 4 / np.sqrt(5000)

    def test_step_family_is_nonlinear(self):
        cfg = SyntheticConfig(n_units=2000, n_covariates=1, family="step",
                              noise_scale=0.0, tau=1.0, seed=12)
        apo = gen_apo(cfg)
        c = apo.values("c0")
        y0 = apo.values("y0")
        # two distinct plateaus, not a line in c
        assert len(np.unique(y0)) == 2
        assert np.all(y0[c > 0] > y0[c <= 0].max() - 1e-12)
