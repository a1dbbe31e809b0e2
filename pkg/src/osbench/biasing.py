"""Treatment-selection bias functions over pre-treatment covariates.

A bias function maps each unit's biasing-covariate values to a probability
of selecting treatment 1 for that unit.  The functional form is logistic in
transformed covariates; transform parameters are estimated once from the
pre-bias dataset and frozen, so sampled subsets never re-define the
function.  Output probabilities are clipped to [eps, 1-eps]; eps = 0 is
allowed only in an explicit positivity-violation mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .data import ROLE_COVARIATE, ROLE_OUTCOME, ROLE_POTENTIAL_OUTCOME, Dataset
from .errors import (
    CalibrationFailed,
    ConstantCovariate,
    EmptyDataset,
    InvalidSchema,
    MissingCovariateValue,
    UnknownCovariate,
)

STANDARDIZE = "standardize"
RANK_QUANTILE = "rank_quantile"
ONE_HOT = "one_hot"

DEFAULT_COEFFICIENT = 0.6
DEFAULT_CLIP_EPSILON = 0.01
WEAK_CORRELATION = 0.05


@dataclass(frozen=True)
class BiasTerm:
    covariate: str
    transform: str = STANDARDIZE
    coefficient: float = DEFAULT_COEFFICIENT
    level: str | None = None  # one_hot only

    def __post_init__(self):
        if self.transform not in (STANDARDIZE, RANK_QUANTILE, ONE_HOT):
            raise InvalidSchema(f"unknown bias transform {self.transform!r}")
        if self.transform == ONE_HOT and self.level is None:
            raise InvalidSchema("one_hot term needs a level")


@dataclass(frozen=True)
class BiasingSpec:
    """Declarative bias function: logistic in transformed covariates.

    ``clip_epsilon`` must be positive unless ``allow_zero_clip`` is set,
    which is the explicit positivity-violation mode.
    """

    terms: tuple[BiasTerm, ...]
    intercept: float = 0.0
    clip_epsilon: float = DEFAULT_CLIP_EPSILON
    allow_zero_clip: bool = False

    def __post_init__(self):
        if not self.terms:
            raise InvalidSchema("bias needs at least one term")
        lo = 0.0 if self.allow_zero_clip else None
        if not (0.0 <= self.clip_epsilon < 0.5):
            raise InvalidSchema("clip_epsilon must lie in [0, 0.5)")
        if self.clip_epsilon == 0.0 and lo is None:
            raise InvalidSchema("clip_epsilon 0 requires allow_zero_clip (positivity violation mode)")

    @classmethod
    def from_dict(cls, doc: dict) -> "BiasingSpec":
        terms = tuple(
            BiasTerm(
                covariate=t["covariate"],
                transform=t.get("transform", STANDARDIZE),
                coefficient=float(t.get("coefficient", DEFAULT_COEFFICIENT)),
                level=t.get("level"),
            )
            for t in doc["terms"]
        )
        return cls(
            terms=terms,
            intercept=float(doc.get("intercept", 0.0)),
            clip_epsilon=float(doc.get("clip_epsilon", DEFAULT_CLIP_EPSILON)),
            allow_zero_clip=bool(doc.get("allow_zero_clip", False)),
        )

    def to_dict(self) -> dict:
        return {
            "terms": [
                {k: v for k, v in dict(
                    covariate=t.covariate, transform=t.transform,
                    coefficient=t.coefficient, level=t.level,
                ).items() if v is not None}
                for t in self.terms
            ],
            "intercept": self.intercept,
            "clip_epsilon": self.clip_epsilon,
            "allow_zero_clip": self.allow_zero_clip,
        }


@dataclass(frozen=True)
class _CompiledTerm:
    kind: str
    covariate: str
    coefficient: float
    mean: float = 0.0
    sd: float = 1.0
    sorted_values: np.ndarray | None = None
    level: str | None = None
    level_code: int = -1

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        if self.kind == STANDARDIZE:
            return (x - self.mean) / self.sd
        if self.kind == RANK_QUANTILE:
            left = np.searchsorted(self.sorted_values, x, side="left")
            right = np.searchsorted(self.sorted_values, x, side="right")
            return (left + right) / 2.0 / len(self.sorted_values) - 0.5
        return (x == self.level_code).astype(np.float64)

    def apply_scalar(self, v) -> float:
        if self.kind == ONE_HOT:
            return 1.0 if v == self.level else 0.0
        return float(self.apply_array(np.asarray([float(v)]))[0])


@dataclass(frozen=True)
class CompiledBias:
    """Frozen, pure bias function; same covariate row always maps to the same probability."""

    terms: tuple[_CompiledTerm, ...]
    intercept: float
    clip_epsilon: float
    outcome_correlations: dict[str, float] = field(default_factory=dict)
    weak_covariates: tuple[str, ...] = ()

    def linear_predictor(self, d: Dataset) -> np.ndarray:
        eta = np.full(d.n_rows, self.intercept, dtype=np.float64)
        for term in self.terms:
            if term.covariate not in d.columns:
                raise UnknownCovariate(term.covariate)
            eta += term.coefficient * term.apply_array(d.values(term.covariate).astype(np.float64))
        return eta

    def probabilities(self, d: Dataset) -> np.ndarray:
        """P(selected treatment = 1) per row, clipped to [eps, 1-eps]."""
        p = expit(self.linear_predictor(d))
        return np.clip(p, self.clip_epsilon, 1.0 - self.clip_epsilon)

    def probability(self, row: dict) -> float:
        """Scalar form of :meth:`probabilities`; categorical values given as level strings."""
        eta = self.intercept
        for term in self.terms:
            if term.covariate not in row:
                raise MissingCovariateValue(term.covariate)
            eta += term.coefficient * term.apply_scalar(row[term.covariate])
        p = float(expit(eta))
        return min(max(p, self.clip_epsilon), 1.0 - self.clip_epsilon)

    def describe(self) -> dict:
        """Parameter echo for report metadata."""
        out = []
        for t in self.terms:
            entry = {"covariate": t.covariate, "transform": t.kind, "coefficient": t.coefficient}
            if t.kind == STANDARDIZE:
                entry.update(mean=t.mean, sd=t.sd)
            elif t.kind == ONE_HOT:
                entry.update(level=t.level)
            out.append(entry)
        return {
            "form": "logistic",
            "terms": out,
            "intercept": self.intercept,
            "clip_epsilon": self.clip_epsilon,
        }


def _reference_outcome(d: Dataset) -> np.ndarray | None:
    names = [n for n, r in d.roles.items() if r.kind == ROLE_OUTCOME]
    if names:
        return d.values(names[0])
    po = [n for n, r in d.roles.items() if r.kind == ROLE_POTENTIAL_OUTCOME]
    if po:
        return np.mean([d.values(n) for n in po], axis=0)
    return None


def compile_bias(spec: BiasingSpec, d: Dataset) -> CompiledBias:
    """Freeze transform parameters against ``d`` and record confounding diagnostics.

    Each biasing covariate's correlation with outcome is recorded;
    covariates below |0.05| land in ``weak_covariates`` since they induce
    little confounding no matter how strong the sampling dependence is.
    """
    if d.n_rows == 0:
        raise EmptyDataset("cannot compile bias against an empty table")
    compiled: list[_CompiledTerm] = []
    for t in spec.terms:
        if t.covariate not in d.columns:
            raise UnknownCovariate(t.covariate)
        if d.roles[t.covariate].kind != ROLE_COVARIATE:
            raise InvalidSchema(f"biasing column {t.covariate!r} must carry the covariate role")
        x = d.values(t.covariate).astype(np.float64)
        if t.transform == ONE_HOT:
            if not d.is_categorical(t.covariate):
                raise InvalidSchema(f"one_hot transform needs a categorical column, got {t.covariate!r}")
            levels = d.levels[t.covariate]
            if t.level not in levels:
                raise UnknownCovariate(f"{t.covariate}={t.level}")
            compiled.append(_CompiledTerm(ONE_HOT, t.covariate, t.coefficient,
                                          level=t.level, level_code=levels.index(t.level)))
            continue
        if np.unique(x).size < 2:
            raise ConstantCovariate(t.covariate)
        if t.transform == STANDARDIZE:
            mean, sd = float(x.mean()), float(x.std())
            compiled.append(_CompiledTerm(STANDARDIZE, t.covariate, t.coefficient, mean=mean, sd=sd))
        else:
            compiled.append(_CompiledTerm(RANK_QUANTILE, t.covariate, t.coefficient,
                                          sorted_values=np.sort(x)))

    y = _reference_outcome(d)
    correlations: dict[str, float] = {}
    weak: list[str] = []
    if y is not None and np.std(y) > 0:
        for term in compiled:
            z = term.apply_array(d.values(term.covariate).astype(np.float64))
            if np.std(z) == 0:
                correlations[term.covariate] = 0.0
            else:
                correlations[term.covariate] = float(np.corrcoef(z, y)[0, 1])
            if abs(correlations[term.covariate]) < WEAK_CORRELATION:
                weak.append(term.covariate)

    return CompiledBias(tuple(compiled), spec.intercept, spec.clip_epsilon,
                        correlations, tuple(weak))


def calibrate_mean_half(b: CompiledBias, d: Dataset, tol: float = 1e-6,
                        max_shift: float = 1e6) -> CompiledBias:
    """Shift the intercept so the mean selection probability over ``d`` is 0.5.

    Bisection on the intercept shift; transforms and coefficients are left
    untouched.  Raises ``CalibrationFailed`` when no shift within
    ``max_shift`` reaches 0.5 (pathological coefficient scales).
    """
    if d.n_rows == 0:
        raise EmptyDataset("cannot calibrate against an empty table")
    eta = b.linear_predictor(d)
    lo_p, hi_p = b.clip_epsilon, 1.0 - b.clip_epsilon

    def mean_at(delta: float) -> float:
        return float(np.clip(expit(eta + delta), lo_p, hi_p).mean())

    if abs(mean_at(0.0) - 0.5) <= tol:
        return b

    lo, hi = -1.0, 1.0
    while mean_at(lo) > 0.5:
        lo *= 2.0
        if -lo > max_shift:
            raise CalibrationFailed(f"mean 0.5 not reachable within intercept shift {max_shift}")
    while mean_at(hi) < 0.5:
        hi *= 2.0
        if hi > max_shift:
            raise CalibrationFailed(f"mean 0.5 not reachable within intercept shift {max_shift}")

    delta = 0.0
    for _ in range(200):
        delta = (lo + hi) / 2.0
        m = mean_at(delta)
        if abs(m - 0.5) <= tol:
            break
        if m < 0.5:
            lo = delta
        else:
            hi = delta
    else:
        raise CalibrationFailed("bisection did not reach the 1e-6 tolerance")

    return replace(b, intercept=b.intercept + delta)


def sigmoid(x: float) -> float:
    """Plain logistic function; exposed for fixtures and documentation."""
    return 1.0 / (1.0 + math.exp(-x))
