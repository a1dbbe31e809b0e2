"""Treatment-effect estimators evaluated by the benchmark.

All estimators are pure functions of a :class:`ConstructedStudy`: they see
only the estimator-visible covariates (hidden confounders excluded) and
return an :class:`EffectEstimate` carrying the point estimate plus
diagnostics.  The shared propensity model is a from-scratch logistic
regression fit by iteratively reweighted least squares.

In reweighting mode only estimators that honor unit-level weights (naive,
outcome regression) are valid; the others refuse rather than silently
estimating on the unbiased full sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import Dataset, encode_covariates
from .errors import (
    DegenerateSample,
    NonFiniteFeature,
    SingleClassTreatment,
    WeightsUnsupported,
)
from .sampling import MODE_REWEIGHT, ConstructedStudy

ATE = "ate"
RISK_DIFFERENCE = "risk_difference"

PROPENSITY_CLIP = 0.01       # positivity protection before weights are formed
SEPARATION_CLIP = 1e-6       # fitted-score band whose violation flags separation
GRADIENT_TOL = 1e-8
MAX_IRLS_ITER = 100
RIDGE_LAMBDA = 1e-6
HIGH_TIE_RATE = 0.1


@dataclass(frozen=True)
class PropensityModel:
    """Logistic treatment model; ``coef[0]`` is the intercept."""

    coef: np.ndarray
    converged: bool
    iterations: int
    log_likelihood: float
    separated: bool

    def predict(self, features: np.ndarray) -> np.ndarray:
        X = np.column_stack([np.ones(len(features)), features])
        p = expit(X @ self.coef)
        return np.clip(p, SEPARATION_CLIP, 1.0 - SEPARATION_CLIP)


@dataclass(frozen=True)
class EffectEstimate:
    estimator: str
    estimand: str
    value: float
    n_used: int
    diagnostics: dict = field(default_factory=dict)


def _logistic_irls(X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray | None = None,
                   max_iter: int = MAX_IRLS_ITER, tol: float = GRADIENT_TOL):
    """Newton/IRLS fit of a logistic model; X already carries its intercept column.

    Falls back to a ridge-stabilized step when the weighted normal matrix
    is singular, and caps step length so separated problems stay finite.
    """
    n, p = X.shape
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    beta = np.zeros(p)
    iterations = 0
    grad_ok = False
    for iterations in range(1, max_iter + 1):
        mu = expit(X @ beta)
        grad = X.T @ (w * (y - mu))
        if np.abs(grad).max() < tol:
            grad_ok = True
            break
        curvature = w * mu * (1.0 - mu)
        hess = X.T @ (curvature[:, None] * X)
        try:
            delta = np.linalg.solve(hess, grad)
            if not np.isfinite(delta).all():
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            delta = np.linalg.solve(hess + RIDGE_LAMBDA * np.eye(p), grad)
        step = np.abs(delta).max()
        if step > 10.0:
            delta *= 10.0 / step
        beta = beta + delta
        if not np.isfinite(beta).all():
            raise np.linalg.LinAlgError("logistic fit diverged")

    mu = expit(X @ beta)
    separated = bool((mu < SEPARATION_CLIP).any() or (mu > 1.0 - SEPARATION_CLIP).any())
    mu_c = np.clip(mu, SEPARATION_CLIP, 1.0 - SEPARATION_CLIP)
    ll = float(np.sum(w * (y * np.log(mu_c) + (1.0 - y) * np.log(1.0 - mu_c))))
    return beta, grad_ok and not separated, iterations, separated, ll


def fit_propensity(features: np.ndarray, treatment: np.ndarray,
                   sample_weight: np.ndarray | None = None,
                   max_iter: int = MAX_IRLS_ITER, tol: float = GRADIENT_TOL) -> PropensityModel:
    """Fit P(T=1 | features) by iteratively reweighted least squares.

    ``features`` is the encoded covariate block without an intercept
    column (it may have zero columns, giving the intercept-only model).
    Separation is detected from fitted scores leaving the central band and
    reported via ``converged``/``separated``; scores are clipped either way.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, None]
    t = np.asarray(treatment, dtype=np.float64)
    if not np.isfinite(features).all():
        raise NonFiniteFeature("covariate matrix contains non-finite values")
    if (t == 1).sum() == 0 or (t == 0).sum() == 0:
        raise SingleClassTreatment("need at least one treated and one control unit")
    X = np.column_stack([np.ones(len(t)), features])
    beta, converged, iterations, separated, ll = _logistic_irls(X, t, sample_weight, max_iter, tol)
    return PropensityModel(beta, converged, iterations, ll, separated)


# -- shared plumbing -----------------------------------------------------------


@dataclass(frozen=True)
class _Design:
    t: np.ndarray
    y: np.ndarray
    X: np.ndarray
    feature_names: list[str]
    weights: np.ndarray | None
    binary_outcome: bool


def _design(s: ConstructedStudy) -> _Design:
    d: Dataset = s.accepted
    t = d.treatment.astype(np.int64)
    if (t == 1).sum() == 0 or (t == 0).sum() == 0:
        raise DegenerateSample("accepted sample lost a treatment arm")
    y = d.outcome.astype(np.float64)
    X, names = encode_covariates(d, s.visible_covariates())
    w = s.weights()
    binary = bool(np.isin(y, (0.0, 1.0)).all())
    return _Design(t, y, X, names, w, binary)


def _estimand(design: _Design) -> str:
    return RISK_DIFFERENCE if design.binary_outcome else ATE


def _require_subsample_mode(s: ConstructedStudy, estimator: str) -> None:
    if s.mode == MODE_REWEIGHT:
        raise WeightsUnsupported(f"{estimator} does not honor unit weights; "
                                 "use subsample mode for it")


def _wls(X: np.ndarray, y: np.ndarray, w: np.ndarray | None) -> np.ndarray:
    """Weighted least squares with a ridge fallback for rank-deficient designs."""
    if w is None:
        Xw, yw = X, y
    else:
        sw = np.sqrt(w)
        Xw, yw = X * sw[:, None], y * sw
    gram = Xw.T @ Xw
    rhs = Xw.T @ yw
    try:
        coef = np.linalg.solve(gram, rhs)
        if not np.isfinite(coef).all():
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        coef = np.linalg.solve(gram + RIDGE_LAMBDA * np.eye(X.shape[1]), rhs)
    return coef


def _clip_scores(e: np.ndarray) -> np.ndarray:
    return np.clip(e, PROPENSITY_CLIP, 1.0 - PROPENSITY_CLIP)


# -- estimators ----------------------------------------------------------------


def estimate_naive(s: ConstructedStudy) -> EffectEstimate:
    """Difference of (weighted) group means; doubles as the confounding gauge."""
    des = _design(s)
    w = des.weights if des.weights is not None else np.ones(len(des.t))
    treated, control = des.t == 1, des.t == 0
    mean1 = float(np.sum(w[treated] * des.y[treated]) / np.sum(w[treated]))
    mean0 = float(np.sum(w[control] * des.y[control]) / np.sum(w[control]))
    return EffectEstimate("naive", _estimand(des), mean1 - mean0, len(des.t),
                          {"n_treated": int(treated.sum()), "n_control": int(control.sum())})


def estimate_iptw(s: ConstructedStudy, propensity: np.ndarray | None = None) -> EffectEstimate:
    """Self-normalized inverse-probability weighting on the fitted propensity."""
    _require_subsample_mode(s, "iptw")
    des = _design(s)
    diagnostics: dict = {}
    if propensity is None:
        model = fit_propensity(des.X, des.t)
        e = model.predict(des.X)
        diagnostics["propensity_converged"] = model.converged
    else:
        e = np.asarray(propensity, dtype=np.float64)
    e = _clip_scores(e)
    diagnostics["propensity_clip"] = PROPENSITY_CLIP
    treated, control = des.t == 1, des.t == 0
    w1 = 1.0 / e[treated]
    w0 = 1.0 / (1.0 - e[control])
    value = float(np.sum(des.y[treated] * w1) / np.sum(w1)
                  - np.sum(des.y[control] * w0) / np.sum(w0))
    diagnostics["max_weight"] = float(max(w1.max(), w0.max()))
    return EffectEstimate("iptw", _estimand(des), value, len(des.t), diagnostics)


def estimate_outcome_regression(s: ConstructedStudy) -> EffectEstimate:
    """Regression of outcome on treatment and all visible covariates.

    Continuous outcomes: (weighted) least squares, effect = treatment
    coefficient.  Binary outcomes: logistic fit plus averaging of the
    modeled outcome under both treatment assignments.
    """
    des = _design(s)
    X = np.column_stack([np.ones(len(des.t)), des.t.astype(np.float64), des.X])
    diagnostics: dict = {"binary_outcome": des.binary_outcome}
    if not des.binary_outcome:
        coef = _wls(X, des.y, des.weights)
        value = float(coef[1])
    else:
        beta, converged, _, separated, _ = _logistic_irls(X, des.y, des.weights)
        diagnostics.update(outcome_model_converged=converged, separated=separated)
        X1 = X.copy()
        X0 = X.copy()
        X1[:, 1] = 1.0
        X0[:, 1] = 0.0
        p1 = expit(X1 @ beta)
        p0 = expit(X0 @ beta)
        if des.weights is None:
            value = float(np.mean(p1 - p0))
        else:
            value = float(np.sum(des.weights * (p1 - p0)) / np.sum(des.weights))
    return EffectEstimate("or", _estimand(des), value, len(des.t), diagnostics)


def _nearest_opposite(query: np.ndarray, cand: np.ndarray, cand_rows: np.ndarray):
    """Nearest candidate per query on a 1-d score, ties to the lowest row index.

    Returns (chosen row index per query, tie flag per query).  ``cand``
    is scanned in its original row order, so argsort stability makes the
    first element of each equal-value run the lowest row index.
    """
    order = np.argsort(cand, kind="stable")
    sv = cand[order]
    gidx = cand_rows[order]
    starts = np.flatnonzero(np.r_[True, np.diff(sv) != 0])
    run_id = np.cumsum(np.r_[True, np.diff(sv) != 0]) - 1
    run_first = gidx[starts]
    run_len = np.diff(np.r_[starts, len(sv)])

    pos = np.searchsorted(sv, query, side="left")
    has_left = pos > 0
    has_right = pos < len(sv)
    d_left = np.where(has_left, query - sv[np.maximum(pos - 1, 0)], np.inf)
    d_right = np.where(has_right, sv[np.minimum(pos, len(sv) - 1)] - query, np.inf)

    left_first = run_first[run_id[np.maximum(pos - 1, 0)]]
    right_first = run_first[run_id[np.minimum(pos, len(sv) - 1)]]
    left_count = run_len[run_id[np.maximum(pos - 1, 0)]]
    right_count = run_len[run_id[np.minimum(pos, len(sv) - 1)]]

    use_left = d_left < d_right
    use_both = d_left == d_right
    chosen = np.where(use_left, left_first, right_first)
    chosen = np.where(use_both, np.minimum(np.where(has_left, left_first, np.iinfo(np.int64).max),
                                           np.where(has_right, right_first, np.iinfo(np.int64).max)),
                      chosen)
    # tie if several candidates share the winning distance
    n_at_min = np.where(use_both, left_count + right_count,
                        np.where(use_left, left_count, right_count))
    return chosen.astype(np.int64), n_at_min > 1


def estimate_psm(s: ConstructedStudy, propensity: np.ndarray | None = None,
                 estimand_mode: str = "ate") -> EffectEstimate:
    """Nearest-neighbor matching on the logit propensity, with replacement.

    ``estimand_mode="ate"`` matches in both directions and averages the
    imputed potential-outcome differences over all units;
    ``"att"`` matches treated units only.
    """
    _require_subsample_mode(s, "psm")
    des = _design(s)
    diagnostics: dict = {}
    if propensity is None:
        model = fit_propensity(des.X, des.t)
        e = model.predict(des.X)
        diagnostics["propensity_converged"] = model.converged
    else:
        e = np.asarray(propensity, dtype=np.float64)
    e = _clip_scores(e)
    diagnostics["propensity_clip"] = PROPENSITY_CLIP
    logit = np.log(e / (1.0 - e))
    rows = np.arange(len(des.t))
    treated_rows = rows[des.t == 1]
    control_rows = rows[des.t == 0]

    match_for_treated, tie_t = _nearest_opposite(logit[treated_rows], logit[control_rows], control_rows)
    if estimand_mode == "att":
        value = float(np.mean(des.y[treated_rows] - des.y[match_for_treated]))
        tie_rate = float(np.mean(tie_t))
        n_used = len(treated_rows)
    else:
        match_for_control, tie_c = _nearest_opposite(logit[control_rows], logit[treated_rows], treated_rows)
        y1 = des.y.copy()
        y0 = des.y.copy()
        y0[treated_rows] = des.y[match_for_treated]
        y1[control_rows] = des.y[match_for_control]
        value = float(np.mean(y1 - y0))
        tie_rate = float(np.mean(np.r_[tie_t, tie_c]))
        n_used = len(des.t)
    diagnostics["tie_rate"] = tie_rate
    diagnostics["high_tie_rate"] = tie_rate > HIGH_TIE_RATE
    return EffectEstimate("psm", _estimand(des), value, n_used, diagnostics)


def _arm_outcome_models(des: _Design) -> tuple[np.ndarray, np.ndarray, dict]:
    """Per-arm outcome regressions evaluated on all units (mu1, mu0)."""
    X = np.column_stack([np.ones(len(des.t)), des.X])
    diagnostics: dict = {}
    out = []
    for arm in (1, 0):
        mask = des.t == arm
        if not des.binary_outcome:
            coef = _wls(X[mask], des.y[mask], None)
            out.append(X @ coef)
        else:
            beta, converged, _, _, _ = _logistic_irls(X[mask], des.y[mask])
            diagnostics[f"outcome_model_{arm}_converged"] = converged
            out.append(expit(X @ beta))
    return out[0], out[1], diagnostics


def estimate_aipw(s: ConstructedStudy, propensity: np.ndarray | None = None,
                  mu1: np.ndarray | None = None, mu0: np.ndarray | None = None) -> EffectEstimate:
    """Augmented inverse-probability weighting (doubly robust).

    Combines per-arm outcome regressions with the fitted propensity; the
    augmentation vanishes when the outcome model is exact, and the outcome
    model bias cancels when the propensity is exact.
    """
    _require_subsample_mode(s, "aipw")
    des = _design(s)
    diagnostics: dict = {}
    if propensity is None:
        model = fit_propensity(des.X, des.t)
        e = model.predict(des.X)
        diagnostics["propensity_converged"] = model.converged
    else:
        e = np.asarray(propensity, dtype=np.float64)
    e = _clip_scores(e)
    diagnostics["propensity_clip"] = PROPENSITY_CLIP
    if mu1 is None or mu0 is None:
        m1, m0, arm_diag = _arm_outcome_models(des)
        diagnostics.update(arm_diag)
        mu1 = m1 if mu1 is None else np.asarray(mu1, dtype=np.float64)
        mu0 = m0 if mu0 is None else np.asarray(mu0, dtype=np.float64)
    else:
        mu1 = np.asarray(mu1, dtype=np.float64)
        mu0 = np.asarray(mu0, dtype=np.float64)
    t = des.t.astype(np.float64)
    contrib = (mu1 - mu0
               + t * (des.y - mu1) / e
               - (1.0 - t) * (des.y - mu0) / (1.0 - e))
    diagnostics["max_weight"] = float(np.max(1.0 / np.minimum(e, 1.0 - e)))
    value = float(np.mean(contrib))
    if des.binary_outcome and not -1.0 <= value <= 1.0:
        # a risk difference is a contrast of probabilities; weight spikes can
        # push the augmented sum outside, so the estimate is clamped
        diagnostics["clamped_from"] = value
        value = min(max(value, -1.0), 1.0)
    return EffectEstimate("aipw", _estimand(des), value, len(des.t), diagnostics)


def _psm_att(s: ConstructedStudy) -> EffectEstimate:
    return estimate_psm(s, estimand_mode="att")


BUILTIN_ESTIMATORS = {
    "naive": estimate_naive,
    "iptw": estimate_iptw,
    "or": estimate_outcome_regression,
    "psm": estimate_psm,
    "psm_att": _psm_att,
    "aipw": estimate_aipw,
}
