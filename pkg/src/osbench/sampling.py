"""Constructed observational samples from experimental tables.

Two sampling routes produce confounded data: drawing a treatment per unit
from the bias function and keeping the matching row (subsampling a trial
table, or reading off the matching potential outcome), and a deterministic
reweighting view that keeps every unit.  Rejected trial rows are kept as
the complementary sample for weighted held-out evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .biasing import CompiledBias
from .data import (
    APO,
    OBSERVATIONAL,
    RCT,
    ColumnRole,
    Dataset,
    ROLE_COVARIATE,
    ROLE_OUTCOME,
    ROLE_POTENTIAL_OUTCOME,
    ROLE_TREATMENT,
    ROLE_WEIGHT,
    write_csv,
)
from .errors import (
    InvalidSchema,
    NonBinaryTreatment,
    NotApoTable,
    NotRctTable,
    UnknownCovariate,
)

MODE_SUBSAMPLE = "subsample"
MODE_REWEIGHT = "reweight"


@dataclass(frozen=True)
class ConstructedStudy:
    """A constructed observational sample plus everything needed to score it.

    ``selection_prob`` holds, for each accepted row, the probability that
    the unit's recorded treatment would be selected for it; the
    complementary probabilities refer to each rejected unit's *observed*
    treatment, so held-out weights p/(1-p) can be formed at evaluation
    time.  ``hidden`` lists covariates excluded from the estimator view
    (the columns stay in the tables for bookkeeping).
    """

    accepted: Dataset
    complementary: Dataset
    selection_prob: np.ndarray
    comp_selection_prob: np.ndarray
    mode: str = MODE_SUBSAMPLE
    hidden: tuple[str, ...] = ()
    seed: int | None = None

    def __post_init__(self):
        if len(self.selection_prob) != self.accepted.n_rows:
            raise InvalidSchema("selection_prob length mismatch")
        if len(self.comp_selection_prob) != self.complementary.n_rows:
            raise InvalidSchema("comp_selection_prob length mismatch")
        for p in (self.selection_prob, self.comp_selection_prob):
            if len(p) and (p.min() < 0.0 or p.max() > 1.0):
                raise InvalidSchema("selection probabilities outside [0, 1]")
            p.flags.writeable = False

    @property
    def degenerate(self) -> bool:
        """True when the accepted sample lost one of the treatment arms."""
        t = self.accepted.treatment
        return bool(t.size == 0 or (t == 1).sum() == 0 or (t == 0).sum() == 0)

    def visible_covariates(self) -> tuple[str, ...]:
        return tuple(n for n in self.accepted.covariate_names if n not in self.hidden)

    def weights(self) -> np.ndarray | None:
        name = self.accepted.weight_name
        return self.accepted.values(name) if name is not None else None


def _require_binary_rct(d: Dataset) -> None:
    if d.table_kind != RCT:
        raise NotRctTable(f"expected an rct table, got {d.table_kind}")
    if not d.treatment_is_binary():
        raise NonBinaryTreatment("treatment must be binarized to {0,1} before sampling")


def _require_apo(d: Dataset) -> None:
    if d.table_kind != APO:
        raise NotApoTable(f"expected an apo table, got {d.table_kind}")


def _empty_like(d: Dataset) -> Dataset:
    cols = {n: np.empty(0, dtype=v.dtype) for n, v in d.columns.items()}
    return Dataset(cols, dict(d.roles), d.table_kind, dict(d.levels))


def _resolve_outcome(apo: Dataset, t_s: np.ndarray, outcome_name: str,
                     table_kind: str) -> Dataset:
    """One row per unit: treatment := sampled value, outcome := matching potential outcome."""
    y0 = apo.values(apo.potential_outcome_name(0))
    y1 = apo.values(apo.potential_outcome_name(1))
    y = np.where(t_s == 1, y1, y0).astype(np.float64)
    po_cols = tuple(n for n, r in apo.roles.items() if r.kind == ROLE_POTENTIAL_OUTCOME)
    if outcome_name in apo.columns and outcome_name not in po_cols:
        raise InvalidSchema(f"outcome name {outcome_name!r} collides with an existing column")
    return apo.with_columns(
        {apo.treatment_name: t_s.astype(np.int64), outcome_name: y},
        {apo.treatment_name: ColumnRole(ROLE_TREATMENT), outcome_name: ColumnRole(ROLE_OUTCOME)},
        drop=po_cols,
        table_kind=table_kind,
    )


def osapo_sample(apo: Dataset, b: CompiledBias, rng: np.random.Generator,
                 outcome_name: str = "y", seed: int | None = None) -> ConstructedStudy:
    """Biased sampling when all potential outcomes are recorded.

    Every unit keeps exactly one row (the drawn treatment's outcome), so
    the output size equals the input size and the complementary sample is
    empty.
    """
    _require_apo(apo)
    p1 = b.probabilities(apo)
    t_s = (rng.random(apo.n_rows) < p1).astype(np.int64)
    accepted = _resolve_outcome(apo, t_s, outcome_name, OBSERVATIONAL)
    p_sel = np.where(t_s == 1, p1, 1.0 - p1)
    return ConstructedStudy(accepted, _empty_like(accepted), p_sel,
                            np.empty(0), MODE_SUBSAMPLE, (), seed)


def osrct_sample(rct: Dataset, b: CompiledBias, rng: np.random.Generator,
                 seed: int | None = None) -> ConstructedStudy:
    """Biased subsampling of a randomized trial.

    A treatment is drawn per unit from the bias function; units whose
    observed treatment matches are accepted, the rest form the
    complementary sample.  Both sides record the probability that the
    unit's observed treatment would have been drawn.  A sample that lost
    an arm is returned with ``degenerate`` set rather than resampled.
    """
    _require_binary_rct(rct)
    p1 = b.probabilities(rct)
    t_obs = rct.treatment.astype(np.int64)
    t_s = (rng.random(rct.n_rows) < p1).astype(np.int64)
    accept = t_obs == t_s
    p_obs = np.where(t_obs == 1, p1, 1.0 - p1)

    accepted = replace(rct.take_rows(np.flatnonzero(accept)), table_kind=OBSERVATIONAL)
    comp = replace(rct.take_rows(np.flatnonzero(~accept)), table_kind=OBSERVATIONAL)
    return ConstructedStudy(accepted, comp, p_obs[accept], p_obs[~accept],
                            MODE_SUBSAMPLE, (), seed)


def weighted_view(rct: Dataset, b: CompiledBias, weight_name: str = "sample_weight",
                  seed: int | None = None) -> ConstructedStudy:
    """Reweighting alternative to subsampling: keep all units, attach selection weights.

    Deterministic (no randomness), so repeated calls yield the identical
    study; only estimators that honor unit weights see the induced bias.
    """
    _require_binary_rct(rct)
    if rct.weight_name is not None:
        raise InvalidSchema("table already carries a weight column")
    if weight_name in rct.columns:
        raise InvalidSchema(f"weight name {weight_name!r} collides with an existing column")
    p1 = b.probabilities(rct)
    w = np.where(rct.treatment.astype(np.int64) == 1, p1, 1.0 - p1)
    accepted = rct.with_columns({weight_name: w.astype(np.float64)},
                                {weight_name: ColumnRole(ROLE_WEIGHT)},
                                table_kind=OBSERVATIONAL)
    return ConstructedStudy(accepted, _empty_like(accepted), w, np.empty(0),
                            MODE_REWEIGHT, (), seed)


def apo_to_rct(apo: Dataset, rng: np.random.Generator, p_treat: float = 0.5,
               outcome_name: str = "y") -> Dataset:
    """Collapse an all-potential-outcomes table into trial-style data.

    Treatment is drawn per unit independently of covariates (probability
    ``p_treat``); the matching potential outcome becomes the observed one.
    """
    _require_apo(apo)
    t = (rng.random(apo.n_rows) < p_treat).astype(np.int64)
    return _resolve_outcome(apo, t, outcome_name, RCT)


def hide_covariates(s: ConstructedStudy, names: list[str] | tuple[str, ...]) -> ConstructedStudy:
    """Exclude covariates from the estimator view; the columns stay recorded."""
    known = set(s.accepted.covariate_names)
    for n in names:
        if n not in known:
            raise UnknownCovariate(n)
    hidden = s.hidden + tuple(n for n in names if n not in s.hidden)
    return replace(s, hidden=hidden)


def export_study(s: ConstructedStudy, outdir: str | Path, metadata: dict | None = None) -> None:
    """Write accepted/complementary CSVs and a metadata document."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    acc = s.accepted.with_columns(
        {"selection_prob": np.asarray(s.selection_prob, dtype=np.float64)},
        {"selection_prob": ColumnRole(ROLE_COVARIATE)})
    write_csv(acc, outdir / "accepted.csv")
    if s.complementary.n_rows or s.mode == MODE_SUBSAMPLE:
        comp = s.complementary.with_columns(
            {"selection_prob": np.asarray(s.comp_selection_prob, dtype=np.float64)},
            {"selection_prob": ColumnRole(ROLE_COVARIATE)})
        write_csv(comp, outdir / "complementary.csv")
    doc = {"mode": s.mode, "hidden": list(s.hidden), "seed": s.seed,
           "n_accepted": s.accepted.n_rows, "n_complementary": s.complementary.n_rows}
    if metadata:
        doc.update(metadata)
    (outdir / "study.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
