"""Synthetic experiment tables with analytically known effects.

Stands in for restricted-access trial corpora: every generated table
records both potential outcomes per unit, so the exact sample effect is a
column computation, and downstream samplers/estimators can be scored
against it.  Outcome families:

* ``linear``   -- additive in the covariates; effect is the treatment term
* ``step``     -- additive in covariate sign indicators, so a linear
                  outcome regression is misspecified
* ``logistic`` -- binary potential outcomes, effect on the risk scale
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import (
    APO,
    ColumnRole,
    Dataset,
    ROLE_COVARIATE,
    ROLE_POTENTIAL_OUTCOME,
    ROLE_TREATMENT,
    dictionary_encode,
)
from .errors import InvalidConfig, NotApoTable

LINEAR = "linear"
STEP = "step"
LOGISTIC = "logistic"
FAMILIES = (LINEAR, STEP, LOGISTIC)


@dataclass(frozen=True)
class SyntheticConfig:
    """Recipe for one synthetic all-potential-outcomes table.

    Numeric covariates are iid standard normal; optional categorical
    covariates are uniform over ``n_levels`` labels and only affect the
    outcome through ``categorical_coefficient`` (level code, centered).
    ``tau`` is the constant treatment effect; ``tau_coefficients`` adds a
    covariate-dependent component.
    """

    n_units: int = 2000
    n_covariates: int = 2
    n_categorical: int = 0
    n_levels: int = 3
    family: str = LINEAR
    tau: float = 2.0
    tau_coefficients: tuple[float, ...] = ()
    outcome_coefficients: tuple[float, ...] | None = None
    categorical_coefficient: float = 0.0
    intercept: float = 0.0
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_units < 1 or self.n_covariates < 0 or self.n_categorical < 0:
            raise InvalidConfig("sizes must be nonnegative (n_units >= 1)")
        if self.family not in FAMILIES:
            raise InvalidConfig(f"unknown outcome family {self.family!r}")
        if self.noise_scale < 0:
            raise InvalidConfig("noise_scale must be nonnegative")
        if self.n_categorical and self.n_levels < 2:
            raise InvalidConfig("categorical covariates need at least 2 levels")
        if self.outcome_coefficients is not None and len(self.outcome_coefficients) != self.n_covariates:
            raise InvalidConfig("outcome_coefficients length must match n_covariates")
        if self.tau_coefficients and len(self.tau_coefficients) != self.n_covariates:
            raise InvalidConfig("tau_coefficients length must match n_covariates")

    @property
    def betas(self) -> np.ndarray:
        if self.outcome_coefficients is None:
            return np.ones(self.n_covariates)
        return np.asarray(self.outcome_coefficients, dtype=np.float64)

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticConfig":
        kwargs = dict(doc)
        for key in ("tau_coefficients", "outcome_coefficients"):
            if kwargs.get(key) is not None:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        doc = {
            "n_units": self.n_units, "n_covariates": self.n_covariates,
            "n_categorical": self.n_categorical, "n_levels": self.n_levels,
            "family": self.family, "tau": self.tau,
            "tau_coefficients": list(self.tau_coefficients),
            "outcome_coefficients": None if self.outcome_coefficients is None
            else list(self.outcome_coefficients),
            "categorical_coefficient": self.categorical_coefficient,
            "intercept": self.intercept, "noise_scale": self.noise_scale,
            "seed": self.seed,
        }
        return doc


def _numeric_block(columns: dict[str, np.ndarray], cfg: SyntheticConfig, n: int) -> np.ndarray:
    return np.column_stack([columns[f"c{j}"] for j in range(cfg.n_covariates)]) \
        if cfg.n_covariates else np.empty((n, 0))


def _baseline(columns: dict[str, np.ndarray], cfg: SyntheticConfig, n: int) -> np.ndarray:
    c = _numeric_block(columns, cfg, n)
    if cfg.family == STEP:
        c = (c > 0).astype(np.float64)
    base = cfg.intercept + c @ cfg.betas
    for j in range(cfg.n_categorical):
        codes = columns[f"f{j}"].astype(np.float64)
        base = base + cfg.categorical_coefficient * (codes - (cfg.n_levels - 1) / 2.0)
    return base


def _unit_effect(columns: dict[str, np.ndarray], cfg: SyntheticConfig, n: int) -> np.ndarray:
    eff = np.full(n, cfg.tau, dtype=np.float64)
    if cfg.tau_coefficients:
        eff = eff + _numeric_block(columns, cfg, n) @ np.asarray(cfg.tau_coefficients)
    return eff


def gen_apo(cfg: SyntheticConfig) -> Dataset:
    """Generate the all-potential-outcomes table for ``cfg`` (seed-deterministic).

    The treatment column is a placeholder (all zero) until a sampler
    assigns values.
    """
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    n = cfg.n_units
    columns: dict[str, np.ndarray] = {}
    roles: dict[str, ColumnRole] = {}
    levels: dict[str, tuple[str, ...]] = {}
    for j in range(cfg.n_covariates):
        columns[f"c{j}"] = rng.standard_normal(n)
        roles[f"c{j}"] = ColumnRole(ROLE_COVARIATE)
    for j in range(cfg.n_categorical):
        labels = [f"lv{k}" for k in rng.integers(0, cfg.n_levels, size=n)]
        codes, lv = dictionary_encode(labels)
        columns[f"f{j}"] = codes
        roles[f"f{j}"] = ColumnRole(ROLE_COVARIATE)
        levels[f"f{j}"] = lv
    columns["t"] = np.zeros(n, dtype=np.int64)
    roles["t"] = ColumnRole(ROLE_TREATMENT)

    base = _baseline(columns, cfg, n)
    effect = _unit_effect(columns, cfg, n)
    if cfg.family == LOGISTIC:
        u0 = rng.random(n)
        u1 = rng.random(n)
        y0 = (u0 < expit(base)).astype(np.float64)
        y1 = (u1 < expit(base + effect)).astype(np.float64)
    else:
        y0 = base + cfg.noise_scale * rng.standard_normal(n)
        y1 = base + effect + cfg.noise_scale * rng.standard_normal(n)
    columns["y0"] = y0
    columns["y1"] = y1
    roles["y0"] = ColumnRole(ROLE_POTENTIAL_OUTCOME, 0)
    roles["y1"] = ColumnRole(ROLE_POTENTIAL_OUTCOME, 1)
    return Dataset(columns, roles, APO, levels)


def true_effect(apo: Dataset) -> float:
    """Sample-exact effect: mean of the per-unit potential-outcome difference."""
    if apo.table_kind != APO:
        raise NotApoTable("true_effect needs an all-potential-outcomes table")
    y0 = apo.values(apo.potential_outcome_name(0))
    y1 = apo.values(apo.potential_outcome_name(1))
    return float(np.mean(y1 - y0))


def expected_effect(cfg: SyntheticConfig, apo: Dataset) -> float:
    """Noise-free effect for ``cfg`` averaged over the generated covariates.

    For the logistic family this is the closed-form risk difference
    (averaged success-probability contrast); for the additive families it
    is the mean per-unit effect.
    """
    if apo.table_kind != APO:
        raise NotApoTable("expected_effect needs an all-potential-outcomes table")
    base = _baseline(apo.columns, cfg, apo.n_rows)
    effect = _unit_effect(apo.columns, cfg, apo.n_rows)
    if cfg.family == LOGISTIC:
        return float(np.mean(expit(base + effect) - expit(base)))
    return float(np.mean(effect))
