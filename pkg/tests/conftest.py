from __future__ import annotations

import numpy as np
import pytest

from osbench.biasing import BiasingSpec, BiasTerm, calibrate_mean_half, compile_bias
from osbench.data import RCT, ColumnRole, Dataset
from osbench.sampling import ConstructedStudy, apo_to_rct, osrct_sample
from osbench.synthetic import SyntheticConfig, gen_apo


def make_rct(t, y, covariates: dict | None = None, levels: dict | None = None,
             table_kind: str = RCT) -> Dataset:
    """Hand-built trial table from plain lists."""
    columns = {
        "t": np.asarray(t, dtype=np.int64),
        "y": np.asarray(y, dtype=np.float64),
    }
    roles = {"t": ColumnRole("treatment"), "y": ColumnRole("outcome")}
    for name, vals in (covariates or {}).items():
        if levels and name in levels:
            columns[name] = np.asarray(vals, dtype=np.int64)
        else:
            columns[name] = np.asarray(vals, dtype=np.float64)
        roles[name] = ColumnRole("covariate")
    return Dataset(columns, roles, table_kind, dict(levels or {}))


def study_from_arrays(t, y, covariates: dict | None = None,
                      selection_prob=None) -> ConstructedStudy:
    """Constructed study around a hand-built accepted sample."""
    acc = make_rct(t, y, covariates, table_kind="observational")
    comp = acc.take_rows(np.empty(0, dtype=np.int64))
    p = np.full(acc.n_rows, 0.5) if selection_prob is None else np.asarray(selection_prob)
    return ConstructedStudy(acc, comp, p, np.empty(0))


def confounded_study(n=2000, seed=0, bias_coef=1.5, tau=2.0, noise=0.5,
                     n_covariates=2, calibrate=True):
    """Standard confounded synthetic draw: (study, truth on the rct, rct)."""
    cfg = SyntheticConfig(n_units=n, n_covariates=n_covariates, tau=tau,
                          noise_scale=noise, seed=seed)
    apo = gen_apo(cfg)
    rct = apo_to_rct(apo, np.random.default_rng(seed + 1))
    spec = BiasingSpec(terms=(BiasTerm("c0", coefficient=bias_coef),))
    bias = compile_bias(spec, rct)
    if calibrate:
        bias = calibrate_mean_half(bias, rct)
    study = osrct_sample(rct, bias, np.random.default_rng(seed + 2))
    return study, rct


@pytest.fixture
def small_rct() -> Dataset:
    return make_rct(
        t=[1, 1, 0, 0, 1, 0],
        y=[3.0, 3.5, 1.0, 1.5, 2.5, 0.5],
        covariates={"c": [0.2, -0.4, 0.9, -1.3, 0.05, 0.6]},
    )
