"""Benchmark protocol: ground truth, seeded trials, error metrics, aggregation.

One trial = (optionally cap the source table) -> unbiased ground-truth
effect from the pre-bias data -> biased sampling -> hide covariates ->
run every estimator -> record signed and range-normalized errors.  Trials
are pure functions of (config, trial index); the whole report is a pure
function of the config, byte-identical across runs and worker counts.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .biasing import BiasingSpec, CompiledBias, calibrate_mean_half, compile_bias
from .data import (
    APO,
    Dataset,
    OutcomeSpan,
    SchemaConfig,
    binarize_treatment,
    load_table,
    outcome_range,
    subsample_uniform,
)
from .errors import (
    DegenerateRange,
    InvalidConfig,
    MissingPrediction,
    OsbenchError,
    SingleArm,
    WeightOverflow,
)
from .estimators import ATE, BUILTIN_ESTIMATORS, RISK_DIFFERENCE, estimate_naive
from .extern import ExternalEstimator
from .sampling import (
    MODE_REWEIGHT,
    MODE_SUBSAMPLE,
    ConstructedStudy,
    apo_to_rct,
    hide_covariates,
    osrct_sample,
    weighted_view,
)
from .synthetic import SyntheticConfig, gen_apo

PRNG_ID = "numpy PCG64 via SeedSequence(entropy=base_seed, spawn_key=(key,))"
SOURCE_STREAM_KEY = 2**31 + 1  # stream key for the one-off apo->rct conversion
FIXED_CAP_STREAM_KEY = 2**31   # stream key for a cap drawn once and shared by trials


def stream(base_seed: int, key: int) -> np.random.Generator:
    """Deterministic per-(seed, key) random stream; the documented splitting rule."""
    return np.random.default_rng(np.random.SeedSequence(entropy=base_seed, spawn_key=(key,)))


def trial_seed(base_seed: int, trial_index: int) -> int:
    """Displayable integer identifying the trial's stream."""
    return int(np.random.SeedSequence(entropy=base_seed, spawn_key=(trial_index,)).generate_state(1)[0])


# -- configuration -------------------------------------------------------------


@dataclass(frozen=True)
class FileSource:
    path: str
    schema: SchemaConfig

    @classmethod
    def from_dict(cls, doc: dict) -> "FileSource":
        return cls(path=doc["path"], schema=SchemaConfig.from_dict(doc["schema"]))


@dataclass(frozen=True)
class BenchmarkConfig:
    """Single input document for a benchmark run."""

    source: SyntheticConfig | FileSource
    bias: BiasingSpec
    calibrate: bool = True
    hidden: tuple[str, ...] = ()
    estimators: tuple = ("naive", "iptw", "or", "psm", "aipw")
    n_trials: int = 30
    subsample_cap: int = 2000
    base_seed: int = 0
    mode: str = MODE_SUBSAMPLE
    redraw_cap_per_trial: bool = True
    p_treat: float = 0.5
    workers: int = 1

    def __post_init__(self):
        if self.n_trials < 1:
            raise InvalidConfig("n_trials must be at least 1")
        if self.subsample_cap < 100:
            raise InvalidConfig("subsample_cap must be at least 100")
        if self.mode not in (MODE_SUBSAMPLE, MODE_REWEIGHT):
            raise InvalidConfig(f"unknown mode {self.mode!r}")
        if self.workers < 1:
            raise InvalidConfig("workers must be at least 1")
        for e in self.estimators:
            if isinstance(e, str) and e not in BUILTIN_ESTIMATORS:
                raise InvalidConfig(f"unknown estimator id {e!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchmarkConfig":
        src = doc.get("source", {})
        if "synthetic" in src:
            source: SyntheticConfig | FileSource = SyntheticConfig.from_dict(src["synthetic"])
        elif "csv" in src:
            source = FileSource.from_dict(src["csv"])
        else:
            raise InvalidConfig("source must give either 'synthetic' or 'csv'")
        estimators: list = []
        for e in doc.get("estimators", ["naive", "iptw", "or", "psm", "aipw"]):
            if isinstance(e, str):
                estimators.append(e)
            else:
                estimators.append(ExternalEstimator(
                    name=e["name"], command=tuple(e["command"]),
                    timeout=float(e.get("timeout", 30.0))))
        return cls(
            source=source,
            bias=BiasingSpec.from_dict(doc["bias"]),
            calibrate=bool(doc.get("calibrate", True)),
            hidden=tuple(doc.get("hidden", ())),
            estimators=tuple(estimators),
            n_trials=int(doc.get("n_trials", 30)),
            subsample_cap=int(doc.get("subsample_cap", 2000)),
            base_seed=int(doc.get("base_seed", 0)),
            mode=doc.get("mode", MODE_SUBSAMPLE),
            redraw_cap_per_trial=bool(doc.get("redraw_cap_per_trial", True)),
            p_treat=float(doc.get("p_treat", 0.5)),
            workers=int(doc.get("workers", 1)),
        )

    def to_dict(self) -> dict:
        src = ({"synthetic": self.source.to_dict()} if isinstance(self.source, SyntheticConfig)
               else {"csv": {"path": self.source.path}})
        ests: list = []
        for e in self.estimators:
            if isinstance(e, str):
                ests.append(e)
            else:
                ests.append({"name": e.name, "command": list(e.command), "timeout": e.timeout})
        return {
            "source": src, "bias": self.bias.to_dict(), "calibrate": self.calibrate,
            "hidden": list(self.hidden), "estimators": ests, "n_trials": self.n_trials,
            "subsample_cap": self.subsample_cap, "base_seed": self.base_seed,
            "mode": self.mode, "redraw_cap_per_trial": self.redraw_cap_per_trial,
            "p_treat": self.p_treat, "workers": self.workers,
        }


def estimator_name(e) -> str:
    return e if isinstance(e, str) else e.name


# -- metrics -------------------------------------------------------------------


def ground_truth_effect(rct: Dataset) -> float:
    """Unbiased effect from the randomized table: difference of arm means.

    For binary outcomes the same expression is the risk difference.
    """
    t = rct.treatment.astype(np.int64)
    y = rct.outcome.astype(np.float64)
    if (t == 1).sum() == 0 or (t == 0).sum() == 0:
        raise SingleArm("both treatment arms are required for ground truth")
    return float(y[t == 1].mean() - y[t == 0].mean())


def normalized_error(estimate: float, truth: float, span: float) -> float:
    if span <= 0:
        raise DegenerateRange("outcome range is zero")
    return abs(estimate - truth) / span


def complementary_outcome_error(predictions: np.ndarray, s: ConstructedStudy,
                                self_normalized: bool = False) -> float:
    """Selection-weighted mean prediction error over the complementary sample.

    Each rejected unit is weighted by p/(1-p), where p is the probability
    its observed treatment would have been selected; in expectation this
    equals the accepted-sample mean error.  The default denominator is the
    complementary-sample count.
    """
    if s.mode != MODE_SUBSAMPLE:
        raise InvalidConfig("complementary evaluation needs subsample mode")
    predictions = np.asarray(predictions, dtype=np.float64)
    if len(predictions) != s.complementary.n_rows:
        raise MissingPrediction(
            f"got {len(predictions)} predictions for {s.complementary.n_rows} units")
    p = s.comp_selection_prob
    if len(p) and p.max() > 1.0 - 1e-6:
        raise WeightOverflow("a complementary selection probability exceeds 1 - 1e-6")
    w = p / (1.0 - p)
    err = predictions - s.complementary.outcome.astype(np.float64)
    denom = float(np.sum(w)) if self_normalized else float(len(p))
    return float(np.sum(w * err) / denom)


# -- trial records ---------------------------------------------------------------


@dataclass(frozen=True)
class EstimatorResult:
    estimator: str
    status: str                    # "ok" or an error tag
    estimate: float | None = None
    raw_error: float | None = None
    norm_error: float | None = None
    message: str = ""
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator, "status": self.status, "estimate": self.estimate,
            "raw_error": self.raw_error, "norm_error": self.norm_error,
            "message": self.message, "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    seed: int
    truth: float
    n_accepted: int
    degenerate_sample: bool
    naive_bias: float | None
    results: tuple[EstimatorResult, ...]

    def to_dict(self) -> dict:
        return {
            "trial": self.trial, "seed": self.seed, "truth": self.truth,
            "n_accepted": self.n_accepted, "degenerate_sample": self.degenerate_sample,
            "naive_bias": self.naive_bias, "results": [r.to_dict() for r in self.results],
        }


@dataclass(frozen=True)
class BenchmarkReport:
    config: dict
    metadata: dict
    records: tuple[TrialRecord, ...]
    aggregates: dict
    correlation: dict
    failure_counts: dict

    def to_dict(self) -> dict:
        return {
            "config": self.config, "metadata": self.metadata,
            "records": [r.to_dict() for r in self.records],
            "aggregates": self.aggregates, "correlation": self.correlation,
            "failure_counts": self.failure_counts,
        }


# -- pipeline ------------------------------------------------------------------


@dataclass(frozen=True)
class PreparedBenchmark:
    """Source table and frozen bias shared by all trials of one config."""

    source: Dataset
    bias: CompiledBias
    span: OutcomeSpan
    fixed_cap: Dataset | None = None


def load_source(cfg: BenchmarkConfig) -> Dataset:
    """Materialize the pre-bias randomized table for a config."""
    if isinstance(cfg.source, SyntheticConfig):
        apo = gen_apo(cfg.source)
        return apo_to_rct(apo, stream(cfg.base_seed, SOURCE_STREAM_KEY), p_treat=cfg.p_treat)
    d = load_table(cfg.source.path, cfg.source.schema)
    if cfg.source.schema.treatment_levels is not None:
        d = binarize_treatment(d, cfg.source.schema.treatment_levels)
    if d.table_kind == APO:
        d = apo_to_rct(d, stream(cfg.base_seed, SOURCE_STREAM_KEY), p_treat=cfg.p_treat)
    return d


def prepare(cfg: BenchmarkConfig) -> PreparedBenchmark:
    source = load_source(cfg)
    bias = compile_bias(cfg.bias, source)
    if cfg.calibrate:
        bias = calibrate_mean_half(bias, source)
    span = outcome_range(source)
    fixed_cap = None
    if not cfg.redraw_cap_per_trial and source.n_rows > cfg.subsample_cap:
        fixed_cap = subsample_uniform(source, cfg.subsample_cap, stream(cfg.base_seed, FIXED_CAP_STREAM_KEY))
    return PreparedBenchmark(source, bias, span, fixed_cap)


def _error_tag(exc: Exception) -> str:
    return type(exc).__name__


def _run_estimators(cfg: BenchmarkConfig, study: ConstructedStudy, truth: float,
                    span: OutcomeSpan) -> tuple[EstimatorResult, ...]:
    results = []
    for e in cfg.estimators:
        name = estimator_name(e)
        if study.degenerate:
            results.append(EstimatorResult(name, "DegenerateSample",
                                           message="accepted sample lost an arm"))
            continue
        try:
            if isinstance(e, str):
                est = BUILTIN_ESTIMATORS[e](study)
            else:
                est = e.estimate(study)
            raw = abs(est.value - truth)
            norm = None if span.degenerate else raw / span.value
            results.append(EstimatorResult(name, "ok", est.value, raw, norm,
                                           diagnostics=est.diagnostics))
        except (OsbenchError, np.linalg.LinAlgError) as exc:
            results.append(EstimatorResult(name, _error_tag(exc), message=str(exc)))
    return tuple(results)


def run_trial(cfg: BenchmarkConfig, trial_index: int,
              prep: PreparedBenchmark | None = None) -> TrialRecord:
    """Run one seeded trial; failures of individual estimators become data."""
    if prep is None:
        prep = prepare(cfg)
    rng = stream(cfg.base_seed, trial_index)
    seed = trial_seed(cfg.base_seed, trial_index)

    d = prep.source
    if d.n_rows > cfg.subsample_cap:
        d = prep.fixed_cap if prep.fixed_cap is not None else \
            subsample_uniform(d, cfg.subsample_cap, rng)
    truth = ground_truth_effect(d)

    if cfg.mode == MODE_REWEIGHT:
        study = weighted_view(d, prep.bias, seed=seed)
    else:
        study = osrct_sample(d, prep.bias, rng, seed=seed)
    if cfg.hidden:
        study = hide_covariates(study, list(cfg.hidden))

    naive_bias = None
    if not study.degenerate:
        naive_bias = float(estimate_naive(study).value - truth)

    results = _run_estimators(cfg, study, truth, prep.span)
    return TrialRecord(trial_index, seed, truth, study.accepted.n_rows,
                       study.degenerate, naive_bias, results)


def _pearson(a: np.ndarray, b: np.ndarray) -> float | None:
    if np.array_equal(a, b):
        return 1.0
    if np.std(a) == 0 or np.std(b) == 0:
        return None
    return float(np.clip(np.corrcoef(a, b)[0, 1], -1.0, 1.0))


def _aggregate(cfg: BenchmarkConfig, records: tuple[TrialRecord, ...]):
    names = [estimator_name(e) for e in cfg.estimators]
    aggregates: dict = {}
    failures: dict = {}
    signed: dict[str, list] = {n: [] for n in names}
    ok_all: dict[str, bool] = {n: True for n in names}
    for n in names:
        norm_errors = []
        n_failed = 0
        for rec in records:
            res = next(r for r in rec.results if r.estimator == n)
            if res.status == "ok":
                if res.norm_error is not None:
                    norm_errors.append(res.norm_error)
                signed[n].append(res.estimate - rec.truth)
            else:
                n_failed += 1
                ok_all[n] = False
        failures[n] = n_failed
        arr = np.asarray(norm_errors)
        aggregates[n] = {
            "mean_abs_norm_error": float(arr.mean()) if arr.size else None,
            "sd_abs_norm_error": float(arr.std(ddof=1)) if arr.size > 1 else None,
            "n_ok": len(records) - n_failed,
            "n_failed": n_failed,
        }
    correlation: dict = {}
    for a in names:
        correlation[a] = {}
        for b in names:
            if not (ok_all[a] and ok_all[b]):
                correlation[a][b] = None
            else:
                correlation[a][b] = _pearson(np.asarray(signed[a]), np.asarray(signed[b]))
    return aggregates, correlation, failures


def run_benchmark(cfg: BenchmarkConfig) -> BenchmarkReport:
    """Run all trials (optionally in worker threads) and aggregate.

    Records are folded in trial order regardless of completion order, so
    the report is identical for every worker count.
    """
    prep = prepare(cfg)
    if cfg.workers == 1:
        records = tuple(run_trial(cfg, i, prep) for i in range(cfg.n_trials))
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(run_trial, cfg, i, prep) for i in range(cfg.n_trials)]
            records = tuple(f.result() for f in futures)
    aggregates, correlation, failures = _aggregate(cfg, records)
    metadata = {
        "package": f"osbench {__version__}",
        "prng": PRNG_ID,
        "bias": prep.bias.describe(),
        "bias_outcome_correlations": prep.bias.outcome_correlations,
        "weak_biasing_covariates": list(prep.bias.weak_covariates),
        "outcome_range": prep.span.value,
        "outcome_binary": prep.span.binary,
        "estimand": RISK_DIFFERENCE if prep.span.binary else ATE,
        "source_rows": prep.source.n_rows,
    }
    return BenchmarkReport(cfg.to_dict(), metadata, records, aggregates, correlation, failures)


# -- serialization ---------------------------------------------------------------


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


TRIALS_CSV_HEADER = ["trial", "seed", "estimator", "estimate", "truth",
                     "raw_error", "norm_error", "n_accepted", "status"]


def trials_csv(report: BenchmarkReport) -> str:
    """Flat per-(trial, estimator) table; the recomputable source of every figure."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRIALS_CSV_HEADER)
    for rec in report.records:
        for res in rec.results:
            writer.writerow([
                rec.trial, rec.seed, res.estimator, _csv_cell(res.estimate),
                _csv_cell(rec.truth), _csv_cell(res.raw_error), _csv_cell(res.norm_error),
                rec.n_accepted, res.status,
            ])
    return buf.getvalue()


def write_report(report: BenchmarkReport, outdir: str | Path) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    (outdir / "trials.csv").write_text(trials_csv(report))
    (outdir / "metadata.json").write_text(json.dumps(report.metadata, indent=2) + "\n")


def load_report(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text())
    for key in ("config", "records", "aggregates"):
        if key not in doc:
            from .errors import MalformedReport
            raise MalformedReport(f"report document lacks {key!r}")
    return doc


def aggregate_by_source(tagged: list[tuple[str, BenchmarkReport | dict]]) -> dict:
    """Mean absolute normalized error per (estimator, source tag) and overall.

    Pooling is trial-weighted: the overall mean recomputes from the flat
    per-trial records, not from per-report means.
    """
    if not tagged:
        raise InvalidConfig("aggregate_by_source needs at least one report")
    per_source: dict[str, dict[str, list[float]]] = {}
    overall: dict[str, list[float]] = {}
    for label, rep in tagged:
        doc = rep.to_dict() if isinstance(rep, BenchmarkReport) else rep
        for rec in doc["records"]:
            for res in rec["results"]:
                if res["status"] == "ok" and res["norm_error"] is not None:
                    per_source.setdefault(label, {}).setdefault(res["estimator"], []).append(res["norm_error"])
                    overall.setdefault(res["estimator"], []).append(res["norm_error"])
    return {
        "by_source": {
            label: {est: {"mean_abs_norm_error": float(np.mean(v)), "n_trials": len(v)}
                    for est, v in ests.items()}
            for label, ests in per_source.items()
        },
        "overall": {est: {"mean_abs_norm_error": float(np.mean(v)), "n_trials": len(v)}
                    for est, v in overall.items()},
    }
