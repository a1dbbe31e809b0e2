from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from osbench.biasing import BiasTerm, BiasingSpec, compile_bias
from osbench.data import subsample_uniform
from osbench.estimators import (
    estimate_aipw,
    estimate_iptw,
    estimate_naive,
    estimate_outcome_regression,
    estimate_psm,
)
from osbench.sampling import osrct_sample

from conftest import make_rct, study_from_arrays

finite = st.floats(min_value=-50, max_value=50, allow_nan=False, allow_infinity=False)

ALL_SHIFT_INVARIANT = (estimate_naive, estimate_iptw, estimate_outcome_regression,
                       estimate_aipw)


@st.composite
def small_studies(draw):
    """Both-arm samples with one non-constant covariate, sizes 4..24."""
    n1 = draw(st.integers(min_value=2, max_value=12))
    n0 = draw(st.integers(min_value=2, max_value=12))
    n = n1 + n0
    y = draw(st.lists(finite, min_size=n, max_size=n))
    c = draw(st.lists(finite, min_size=n, max_size=n))
    # distinct covariate values keep every regression full-rank
    c = [ci + 0.125 * i for i, ci in enumerate(sorted(c))]
    t = [1] * n1 + [0] * n0
    return t, y, c


@settings(max_examples=40, deadline=None)
@given(small_studies(), st.floats(min_value=-100, max_value=100,
                                  allow_nan=False, allow_infinity=False))
def test_translation_equivariance(tyc, k):
    t, y, c = tyc
    base = study_from_arrays(t, y, {"c": c})
    shifted = study_from_arrays(t, [yi + k for yi in y], {"c": c})
    for fn in ALL_SHIFT_INVARIANT:
        a = fn(base).value
        b = fn(shifted).value
        assert b == pytest.approx(a, abs=1e-8 * max(1.0, abs(k)))


@settings(max_examples=40, deadline=None)
@given(small_studies())
def test_treatment_label_flip_negates(tyc):
    t, y, c = tyc
    base = study_from_arrays(t, y, {"c": c})
    flipped = study_from_arrays([1 - ti for ti in t], y, {"c": c})
    for fn in ALL_SHIFT_INVARIANT:
        assert fn(flipped).value == pytest.approx(-fn(base).value, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(small_studies(), st.randoms(use_true_random=False))
def test_row_permutation_invariance(tyc, rnd):
    t, y, c = tyc
    order = list(range(len(t)))
    rnd.shuffle(order)
    base = study_from_arrays(t, y, {"c": c})
    perm = study_from_arrays([t[i] for i in order], [y[i] for i in order],
                             {"c": [c[i] for i in order]})
    for fn in ALL_SHIFT_INVARIANT:
        assert fn(perm).value == pytest.approx(fn(base).value, abs=1e-8)


def test_psm_permutation_invariance_without_ties():
    # fixed tie-free fixture: permutation must not change the matching
    rng = np.random.default_rng(0)
    t = [1, 1, 1, 0, 0, 0, 0]
    y = [3.0, 4.0, 5.0, 1.0, 2.0, 2.5, 0.5]
    e = rng.uniform(0.2, 0.8, 7)
    base = estimate_psm(study_from_arrays(t, y), propensity=e)
    order = [3, 0, 6, 1, 5, 2, 4]
    perm = estimate_psm(
        study_from_arrays([t[i] for i in order], [y[i] for i in order]),
        propensity=e[order])
    assert perm.value == pytest.approx(base.value, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=-5, max_value=5, allow_nan=False),
       st.floats(min_value=-8, max_value=8, allow_nan=False),
       st.floats(min_value=0.001, max_value=0.2, allow_nan=False))
def test_bias_probabilities_always_clipped(coef, intercept, eps):
    d = make_rct([1, 0, 1, 0], [1, 2, 3, 4], {"c": [-3.0, -1.0, 1.0, 3.0]})
    spec = BiasingSpec(terms=(BiasTerm("c", coefficient=coef),),
                       intercept=intercept, clip_epsilon=eps)
    p = compile_bias(spec, d).probabilities(d)
    assert p.min() >= eps and p.max() <= 1 - eps


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0.01, max_value=5, allow_nan=False))
def test_bias_monotone_for_positive_coefficient(coef):
    d = make_rct([1, 0, 1, 0, 1], [1, 2, 3, 4, 5],
                 {"c": [-2.0, -0.5, 0.0, 0.5, 2.0]})
    spec = BiasingSpec(terms=(BiasTerm("c", coefficient=coef),))
    p = compile_bias(spec, d).probabilities(d)
    assert np.all(np.diff(p) >= 0)


def test_two_stage_subsample_matches_single_draw():
    # inclusion frequencies of draw(5)->draw(3) vs a direct draw(3), compared
    # by a contingency chi-square over many seeds
    d = make_rct([1, 0, 1, 0, 1, 0, 1, 0],
                 [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
    n_seeds = 1500
    two_stage = np.zeros(8)
    single = np.zeros(8)
    ids = d.outcome  # unique per row
    for seed in range(n_seeds):
        rng = np.random.default_rng(10_000 + seed)
        mid = subsample_uniform(d, 5, rng)
        got = subsample_uniform(mid, 3, rng)
        for v in got.outcome:
            two_stage[int(v) - 1] += 1
        rng2 = np.random.default_rng(50_000 + seed)
        got2 = subsample_uniform(d, 3, rng2)
        for v in got2.outcome:
            single[int(v) - 1] += 1
    _, p_value, _, _ = stats.chi2_contingency(np.vstack([two_stage, single]))
    assert p_value > 0.001


def test_osrct_depends_only_on_stream(small_rct):
    spec = BiasingSpec(terms=(BiasTerm("c", coefficient=1.0),))
    b = compile_bias(spec, small_rct)
    a = osrct_sample(small_rct, b, np.random.default_rng(5))
    c = osrct_sample(small_rct, b, np.random.default_rng(5))
    assert a.accepted.equals(c.accepted)
    assert np.array_equal(a.selection_prob, c.selection_prob)
