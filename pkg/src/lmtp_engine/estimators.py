"""Estimators of ``E[Y(d)]``: g-computation, IPW, TMLE and SDR.

All four share one backward recursion over ``t = K, ..., 0`` where ``K`` is
the last time contributing to the outcome. At each ``t`` an outcome
regression ``Q_t(a_t, h_t)`` is fitted on the units still observed after ``t``
and evaluated at ``A_t^d`` for every unit at risk at ``t``:

* g-computation uses ``Q_t(A_t^d, H_t)`` as the next pseudo-outcome;
* TMLE first fluctuates ``logit Q_t`` by an intercept fitted with weights
  ``w_t`` (the cumulative density ratio);
* SDR uses the doubly robust pseudo-outcome
  ``phi_t = f_t (target_t - Q_t(A_t, H_t)) + Q_t(A_t^d, H_t)`` where ``f_t`` is
  the per-time ratio times the censoring factor.

For survival outcomes ``Y_t`` is the event indicator at the end of interval
``t`` and the regression target at ``t < K`` is ``1`` for units with an event
at ``t`` and the next pseudo-outcome otherwise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.optimize import isotonic_regression
from scipy.special import expit, ndtri

from . import _design as D
from .density_ratio import RatioEstimates, estimate_ratios
from .errors import ConvergenceError, EstimationError
from .learners import PROB_CLIP, FoldAssignment, make_folds
from .panel import PanelDataset, take_units
from .policy import Policy

FLUCT_MAX_ITER = 50
FLUCT_TOL = 1e-6
FLUCT_MAX_STEP = 4.0  # trust region on the logit scale


def z_quantile(p: float) -> float:
    """Standard normal quantile."""
    return float(ndtri(p))


@dataclass(frozen=True)
class SequentialFits:
    """Per-time nuisance values, each of shape ``(n, K + 1)`` (nan where undefined)."""

    q_observed: np.ndarray
    q_policy: np.ndarray
    targets: np.ndarray
    pseudo: np.ndarray
    fluctuation: tuple[float, ...] = ()


@dataclass(frozen=True)
class Estimate:
    """Point estimate of ``E[Y(d)]`` with influence-based (or bootstrap) inference."""

    estimator: str
    psi: float
    se: float
    ci: tuple[float, float]
    alpha: float = 0.05
    influence: np.ndarray | None = None
    unit_ids: np.ndarray | None = None
    n: int = 0
    scale: tuple[float, float] = (0.0, 1.0)
    degenerate: bool = False
    provenance: dict = field(default_factory=dict)
    fits: SequentialFits | None = None

    def row(self, **extra) -> dict:
        return {**extra, "estimator": self.estimator, "estimate": self.psi, "se": self.se,
                "ci_low": self.ci[0], "ci_high": self.ci[1]}


def _finish(name: str, psi: float, influence: np.ndarray | None, data: PanelDataset,
            alpha: float, **kw) -> Estimate:
    if influence is None:
        se = np.nan
        ci = (np.nan, np.nan)
    else:
        n = len(influence)
        se = float(np.std(influence, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        z = z_quantile(1 - alpha / 2)
        ci = (psi - z * se, psi + z * se)
    return Estimate(name, float(psi), se, ci, alpha, influence, np.asarray(data.unit_ids),
                    data.n_units, tuple(data.outcome_range), **kw)


# ---------------------------------------------------------------------------
# Outcome handling
# ---------------------------------------------------------------------------

def _last_time(data: PanelDataset, horizon: int | None) -> int:
    """Index of the last interval; ``horizon`` counts intervals (1..tau+1)."""
    if horizon is None:
        return data.horizon
    if not data.is_survival:
        raise EstimationError("horizons apply only to survival outcomes")
    if not 1 <= horizon <= data.n_times:
        raise EstimationError(f"horizon {horizon} outside 1..{data.n_times}")
    return horizon - 1


def _scaled_outcome(data: PanelDataset) -> np.ndarray:
    lo, hi = data.outcome_range
    if data.outcome_type != "continuous" or hi == lo:
        return np.asarray(data.outcome, dtype=float)
    return (data.outcome - lo) / (hi - lo)


def _unscale(data: PanelDataset, x):
    lo, hi = data.outcome_range
    if data.outcome_type != "continuous":
        return x
    return lo + (hi - lo) * x


def _unscale_sd(data: PanelDataset, x):
    lo, hi = data.outcome_range
    return x if data.outcome_type != "continuous" else (hi - lo) * x


def _observed_outcomes(data: PanelDataset, last: int) -> np.ndarray:
    if data.is_survival:
        vals = [data.outcome[data.observed(t), t] for t in range(last + 1)]
        return np.concatenate(vals)
    return data.outcome[data.observed(data.horizon)]


def _degenerate(data: PanelDataset, last: int) -> float | None:
    y = _observed_outcomes(data, last)
    y = y[np.isfinite(y)]
    if y.size and np.all(y == y[0]):
        return float(y[0])
    return None


def _degenerate_estimate(name, value, data, alpha, last) -> Estimate:
    return _finish(name, value, np.zeros(data.n_units), data, alpha, degenerate=True,
                   provenance={"note": "all observed outcomes are equal", "last_time": last})


def _task(data: PanelDataset) -> str:
    return "gaussian" if data.outcome_type == "continuous" else "binomial"


def _logit(p):
    p = np.clip(p, PROB_CLIP, 1 - PROB_CLIP)
    return np.log(p) - np.log1p(-p)


def _resolve_folds(folds, data: PanelDataset, seed: int) -> FoldAssignment | None:
    if folds is None or isinstance(folds, FoldAssignment):
        if isinstance(folds, FoldAssignment) and folds.n != data.n_units:
            raise EstimationError("fold assignment does not match the number of units")
        return folds
    k = int(folds)
    return None if k <= 1 else make_folds(data.n_units, k, seed)


# ---------------------------------------------------------------------------
# TMLE fluctuation
# ---------------------------------------------------------------------------

def fluctuate(offset: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    """Weighted intercept-only logistic regression of ``y`` on offset ``logit Q``.

    Solves ``sum w (y - expit(offset + eps)) = 0`` by damped Newton steps whose
    length is capped, since tiny information makes raw steps overshoot. Convergence
    requires ``|score| / sum(w) <= FLUCT_TOL``.
    """
    w = np.asarray(w, dtype=float)
    if w.sum() <= 0:
        return 0.0
    # the solution is invariant to rescaling w, so the gradient is measured per unit weight
    scale = float(w.sum())

    def loglik(e):
        z = offset + e
        return float(-np.dot(w, y * np.logaddexp(0, -z) + (1 - y) * np.logaddexp(0, z)))

    eps = 0.0
    cur = loglik(eps)
    for it in range(FLUCT_MAX_ITER):
        mu = expit(offset + eps)
        score = float(np.dot(w, y - mu))
        if abs(score) / scale <= 1e-13:
            break
        info = float(np.dot(w, mu * (1 - mu)))
        if info <= 0:
            break
        step = float(np.clip(score / info, -FLUCT_MAX_STEP, FLUCT_MAX_STEP))
        for _ in range(60):
            cand = eps + step
            val = loglik(cand)
            if val >= cur:
                eps, cur = cand, val
                break
            step *= 0.5
        else:
            break
    mu = expit(offset + eps)
    score = float(np.dot(w, y - mu))
    if not np.isfinite(eps) or abs(score) / scale > FLUCT_TOL:
        raise ConvergenceError("TMLE fluctuation did not converge",
                               diagnostics={"epsilon": eps, "score": score / scale,
                                            "n_obs": len(y),
                                            "iterations": FLUCT_MAX_ITER,
                                            "weight_sum": float(w.sum())})
    return float(eps)


# ---------------------------------------------------------------------------
# The recursion
# ---------------------------------------------------------------------------

def _recursion(data: PanelDataset, policy: Policy, learners, folds, mode: str, last: int,
               ratios: RatioEstimates | None, seed: int):
    n = data.n_units
    K = last + 1
    Y = _scaled_outcome(data)
    task = _task(data)
    shape = (n, K)
    q_obs_all, q_pol_all = np.full(shape, np.nan), np.full(shape, np.nan)
    tgt_all, pseudo_all = np.full(shape, np.nan), np.full(shape, np.nan)
    eps_list = []
    resid = np.zeros(n)
    nxt = None
    if mode in ("tmle", "sdr"):
        per_time = _per_time_factor(ratios)
    for t in reversed(range(K)):
        R, O = data.at_risk(t), data.observed(t)
        if not O.any():
            raise EstimationError(f"empty uncensored risk set at time {t}")
        if data.is_survival:
            y_t = Y[:, t]
            tgt = y_t if t == last else np.where(y_t == 1, 1.0, nxt)
        else:
            tgt = Y if t == last else nxt
        tgt_O = tgt[O]
        if not np.all(np.isfinite(tgt_O)):
            raise EstimationError(f"missing regression targets at time {t}")
        cols, specs = D.stack_columns(data, t, D.stack_for(learners, t))
        a_col = D.exposure_col(data, t)
        comps = D.policy_components(policy, data, t)
        for values, _ in comps:
            D.check_domain(data, values, R, "policy")
        units_O, units_R = np.flatnonzero(O), np.flatnonzero(R)
        X_fit = D.matrix(data, cols, O)
        preds = [(X_fit, units_O)]
        preds += [(D.matrix(data, cols, R, {a_col: v}), units_R) for v, _ in comps]
        fit_task, force = task, False
        if mode == "sdr" and t < last:
            fit_task, force = "gaussian", True
        elif task == "binomial" and (tgt_O.min() < 0 or tgt_O.max() > 1):
            fit_task, force = "gaussian", True
        outs = D.crossfit(specs, cols, X_fit, tgt_O, None, units_O, preds, folds, fit_task,
                          seed + 7919 * t, force)
        q_obs, q_pol = outs[0], outs[1:]
        if mode == "tmle":
            w_t = ratios.weights[O, t]
            off = _logit(q_obs)
            eps = fluctuate(off, tgt_O, w_t)
            eps_list.append(eps)
            q_obs = expit(off + eps)
            q_pol = [expit(_logit(q) + eps) for q in q_pol]
        qd = np.zeros(len(units_R))
        for q, (_, prob) in zip(q_pol, comps):
            qd += prob * q
        cur = np.full(n, np.nan)
        cur[R] = qd
        q_pol_all[R, t] = qd
        q_obs_all[O, t] = q_obs
        tgt_all[O, t] = tgt_O
        if mode == "sdr":
            cur[O] += per_time[O, t] * (tgt_O - q_obs)
        elif mode == "tmle":
            resid[O] += ratios.weights[O, t] * (tgt_O - q_obs)
        pseudo_all[R, t] = cur[R]
        nxt = cur
    fits = SequentialFits(q_obs_all, q_pol_all, tgt_all, pseudo_all, tuple(reversed(eps_list)))
    return nxt, resid, fits


def _per_time_factor(ratios: RatioEstimates) -> np.ndarray:
    r = np.nan_to_num(ratios.ratios, nan=0.0)
    if ratios.censoring_factor is not None:
        r = r * ratios.censoring_factor
    return r


def _prepare(data, policy, learners, folds, ratios, seed, truncation, ratio_learners,
             censoring_learners, need_ratios: bool):
    folds = _resolve_folds(folds, data, seed)
    if need_ratios and ratios is None:
        ratios = estimate_ratios(data, policy, ratio_learners if ratio_learners is not None
                                 else learners, folds, censoring_learners, truncation, seed)
    if ratios is not None and ratios.n_times != data.n_times:
        raise EstimationError("ratio estimates do not cover every time point")
    return folds, ratios


def _provenance(folds, ratios, learners, last) -> dict:
    return {"folds": None if folds is None else folds.k,
            "truncation": None if ratios is None else ratios.truncation,
            "learners": _describe_learners(learners), "last_time": last}


def _describe_learners(learners) -> str:
    if learners is None:
        return "glm"
    if isinstance(learners, dict):
        return "; ".join(f"{k}: {_describe_learners(v)}" for k, v in learners.items())
    if hasattr(learners, "label"):
        return learners.label
    return "+".join(s.label for s in learners)


def estimate_gcomp(data: PanelDataset, policy: Policy, learners=None, folds=None, *,
                   horizon: int | None = None, alpha: float = 0.05, seed: int = 0) -> Estimate:
    """Sequential-regression g-computation; ``psi`` is the mean of ``Y~_0``."""
    last = _last_time(data, horizon)
    if (c := _degenerate(data, last)) is not None:
        return _degenerate_estimate("gcomp", c, data, alpha, last)
    folds, _ = _prepare(data, policy, learners, folds, None, seed, None, None, None, False)
    y0, _, fits = _recursion(data, policy, learners, folds, "gcomp", last, None, seed)
    psi = _unscale(data, float(np.mean(y0)))
    return _finish("gcomp", psi, None, data, alpha, fits=fits,
                   provenance=_provenance(folds, None, learners, last))


def estimate_ipw(data: PanelDataset, policy: Policy, ratios: RatioEstimates | None = None, *,
                 learners=None, folds=None, horizon: int | None = None, alpha: float = 0.05,
                 seed: int = 0, truncation: float | None = None,
                 censoring_learners=None) -> Estimate:
    """Mean of ``w * Y``: the terminal weight for terminal outcomes, the weight
    at the event time for survival outcomes."""
    last = _last_time(data, horizon)
    if (c := _degenerate(data, last)) is not None:
        return _degenerate_estimate("ipw", c, data, alpha, last)
    folds, ratios = _prepare(data, policy, learners, folds, ratios, seed, truncation, learners,
                             censoring_learners, True)
    Y = _scaled_outcome(data)
    if data.is_survival:
        contrib = np.zeros(data.n_units)
        for t in range(last + 1):
            O = data.observed(t)
            contrib[O] += ratios.weights[O, t] * Y[O, t]
    else:
        O = data.observed(data.horizon)
        contrib = np.zeros(data.n_units)
        contrib[O] = ratios.weights[O, data.horizon] * Y[O]
    psi = _unscale(data, float(np.mean(contrib)))
    return _finish("ipw", psi, None, data, alpha,
                   provenance=_provenance(folds, ratios, learners, last))


def estimate_tmle(data: PanelDataset, policy: Policy, learners=None, folds=None,
                  ratios: RatioEstimates | None = None, *, horizon: int | None = None,
                  alpha: float = 0.05, seed: int = 0, truncation: float | None = None,
                  ratio_learners=None, censoring_learners=None) -> Estimate:
    """Targeted estimator with a weighted intercept-only logistic fluctuation."""
    last = _last_time(data, horizon)
    if (c := _degenerate(data, last)) is not None:
        return _degenerate_estimate("tmle", c, data, alpha, last)
    folds, ratios = _prepare(data, policy, learners, folds, ratios, seed, truncation,
                             ratio_learners, censoring_learners, True)
    y0, resid, fits = _recursion(data, policy, learners, folds, "tmle", last, ratios, seed)
    psi_s = float(np.mean(y0))
    infl = resid + y0 - psi_s
    return _finish("tmle", _unscale(data, psi_s), _unscale_sd(data, infl), data, alpha,
                   fits=fits, provenance=_provenance(folds, ratios, learners, last))


def estimate_sdr(data: PanelDataset, policy: Policy, learners=None, folds=None,
                 ratios: RatioEstimates | None = None, *, horizon: int | None = None,
                 alpha: float = 0.05, seed: int = 0, truncation: float | None = None,
                 ratio_learners=None, censoring_learners=None) -> Estimate:
    """Sequentially doubly robust estimator; ``psi`` is the mean of ``phi_0``."""
    last = _last_time(data, horizon)
    if (c := _degenerate(data, last)) is not None:
        return _degenerate_estimate("sdr", c, data, alpha, last)
    folds, ratios = _prepare(data, policy, learners, folds, ratios, seed, truncation,
                             ratio_learners, censoring_learners, True)
    phi0, _, fits = _recursion(data, policy, learners, folds, "sdr", last, ratios, seed)
    psi_s = float(np.mean(phi0))
    return _finish("sdr", _unscale(data, psi_s), _unscale_sd(data, phi0 - psi_s), data, alpha,
                   fits=fits, provenance=_provenance(folds, ratios, learners, last))


ESTIMATORS = {"gcomp": estimate_gcomp, "ipw": estimate_ipw, "tmle": estimate_tmle,
              "sdr": estimate_sdr}


def estimate(name: str, data: PanelDataset, policy: Policy, learners=None, folds=None,
             ratios: RatioEstimates | None = None, **kw) -> Estimate:
    """Dispatch by estimator name."""
    if name not in ESTIMATORS:
        raise EstimationError(f"unknown estimator {name!r}")
    if name == "gcomp":
        kw = {k: v for k, v in kw.items() if k in ("horizon", "alpha", "seed")}
        return estimate_gcomp(data, policy, learners, folds, **kw)
    if name == "ipw":
        kw = {k: v for k, v in kw.items() if k not in ("ratio_learners",)}
        return estimate_ipw(data, policy, ratios, learners=learners, folds=folds, **kw)
    return ESTIMATORS[name](data, policy, learners, folds, ratios, **kw)


# ---------------------------------------------------------------------------
# Bootstrap, contrasts
# ---------------------------------------------------------------------------

_BOOTSTRAP_REFUSAL = ("the bootstrap requires parametric (GLM-only) learners: with "
                      "data-adaptive regressions standard inferential tools such as the "
                      "bootstrap will fail")


def _all_specs(learners) -> list:
    if learners is None:
        return []
    if isinstance(learners, dict):
        return [s for v in learners.values() for s in _all_specs(v)]
    if hasattr(learners, "family"):
        return [learners]
    return list(learners)


def bootstrap_se(estimator: str, data: PanelDataset, policy: Policy, learners=None,
                 B: int = 200, seed: int = 0, *, alpha: float = 0.05, horizon=None,
                 truncation: float | None = None) -> Estimate:
    """Unit-level nonparametric bootstrap for g-computation or IPW (no cross-fitting)."""
    if estimator not in ("gcomp", "ipw"):
        raise EstimationError("bootstrap_se supports gcomp and ipw only")
    if any(not s.parametric for s in _all_specs(learners)):
        raise EstimationError(_BOOTSTRAP_REFUSAL)
    if B < 1:
        raise EstimationError("need at least one bootstrap replicate")
    kw = dict(horizon=horizon, alpha=alpha, seed=seed)
    if estimator == "ipw":
        kw["truncation"] = truncation
    base = estimate(estimator, data, policy, learners, None, **kw)
    rng = np.random.default_rng(seed)
    reps = np.empty(B)
    for b in range(B):
        idx = rng.integers(0, data.n_units, data.n_units)
        reps[b] = estimate(estimator, take_units(data, idx), policy, learners, None, **kw).psi
    if B == 1:
        warnings.warn("a single bootstrap replicate gives SE = 0", RuntimeWarning, stacklevel=2)
        se = 0.0
    else:
        se = float(np.std(reps, ddof=1))
    pct = (float(np.quantile(reps, alpha / 2)), float(np.quantile(reps, 1 - alpha / 2)))
    z = z_quantile(1 - alpha / 2)
    prov = dict(base.provenance, bootstrap_replicates=B, percentile_ci=pct)
    return Estimate(base.estimator, base.psi, se, (base.psi - z * se, base.psi + z * se), alpha,
                    None, base.unit_ids, base.n, base.scale, base.degenerate, prov, base.fits)


def contrast(a: Estimate, b: Estimate, type: str = "difference",
             alpha: float | None = None) -> Estimate:
    """Difference or ratio of two estimates on the same units (delta method for ratios)."""
    if a.influence is None or b.influence is None:
        raise EstimationError("contrasts need influence values on both estimates")
    if a.influence.shape != b.influence.shape or (
            a.unit_ids is not None and b.unit_ids is not None
            and not np.array_equal(a.unit_ids, b.unit_ids)):
        raise EstimationError("estimates were computed on different units")
    alpha = a.alpha if alpha is None else alpha
    z = z_quantile(1 - alpha / 2)
    n = len(a.influence)

    def sd(x):
        return float(np.std(x, ddof=1) / np.sqrt(n)) if n > 1 else 0.0

    name = f"{a.estimator}:{type}"
    if type == "difference":
        infl = a.influence - b.influence
        psi = a.psi - b.psi
        se = sd(infl)
        ci = (psi - z * se, psi + z * se)
    elif type == "ratio":
        if a.psi <= 0 or b.psi <= 0:
            raise EstimationError("ratio contrasts need positive estimates")
        log_infl = a.influence / a.psi - b.influence / b.psi
        psi = a.psi / b.psi
        se_log = sd(log_infl)
        infl = psi * log_infl
        se = psi * se_log
        ci = (psi * np.exp(-z * se_log), psi * np.exp(z * se_log))
    else:
        raise EstimationError(f"unknown contrast type {type!r}")
    return Estimate(name, float(psi), se, (float(ci[0]), float(ci[1])), alpha, infl,
                    a.unit_ids, n, a.scale, a.degenerate and b.degenerate,
                    {"contrast": type, "a": a.provenance, "b": b.provenance})


# ---------------------------------------------------------------------------
# Survival curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SurvivalCurve:
    """Cumulative incidence ``P(Y_h(d) = 1)`` at horizons ``1..K`` with bands."""

    horizons: tuple[int, ...]
    estimates: tuple[Estimate, ...]
    band: np.ndarray
    pointwise: np.ndarray
    critical_value: float
    isotonic: bool = True

    @property
    def psi(self) -> np.ndarray:
        return np.array([e.psi for e in self.estimates])

    @property
    def se(self) -> np.ndarray:
        return np.array([e.se for e in self.estimates])

    def table(self, label: str = "") -> pd.DataFrame:
        psi = self.psi
        return pd.DataFrame({
            "curve": label, "horizon": list(self.horizons), "estimate": psi, "se": self.se,
            "ci_low": psi - self.pointwise, "ci_high": psi + self.pointwise,
            "band_low": psi - self.band, "band_high": psi + self.band})


def multiplier_critical_value(influence: np.ndarray, alpha: float = 0.05, B: int = 1000,
                              seed: int = 0, chunk: int = 100) -> float:
    """``1 - alpha`` quantile of ``max_h |Z_h|`` over Gaussian-multiplier replicates.

    ``influence`` has shape ``(n, H)``; ``Z_h = n^{-1/2} sum_i xi_i D_ih / sd_h``.
    """
    D = np.asarray(influence, dtype=float)
    n = D.shape[0]
    sd = D.std(axis=0, ddof=1) if n > 1 else np.zeros(D.shape[1])
    live = sd > 0
    if not live.any():
        return 0.0
    Dn = (D[:, live] - D[:, live].mean(axis=0)) / sd[live]
    rng = np.random.default_rng(seed)
    maxes = []
    for start in range(0, B, chunk):
        m = min(chunk, B - start)
        xi = rng.standard_normal((m, n))
        maxes.append(np.abs(xi @ Dn / np.sqrt(n)).max(axis=1))
    return float(np.quantile(np.concatenate(maxes), 1 - alpha))


def _curve_from(estimates: Sequence[Estimate], horizons, alpha, band_replicates, seed,
                isotonic) -> SurvivalCurve:
    ests = list(estimates)
    z = z_quantile(1 - alpha / 2)
    se = np.array([e.se for e in ests])
    pointwise = z * se
    if all(e.influence is not None for e in ests):
        D = np.column_stack([e.influence for e in ests])
        c = multiplier_critical_value(D, alpha, band_replicates, seed)
        # a simultaneous band is never narrower than the pointwise interval
        c = max(c, z)
    else:
        c = np.nan
    band = c * se
    if isotonic and len(ests) > 1:
        fitted = isotonic_regression(np.array([e.psi for e in ests]), increasing=True).x
        ests = [_recentre(e, float(v)) for e, v in zip(ests, fitted)]
    return SurvivalCurve(tuple(horizons), tuple(ests), band, pointwise, float(c), isotonic)


def _recentre(e: Estimate, psi: float) -> Estimate:
    shift = psi - e.psi
    return Estimate(e.estimator, psi, e.se, (e.ci[0] + shift, e.ci[1] + shift), e.alpha,
                    e.influence, e.unit_ids, e.n, e.scale, e.degenerate,
                    dict(e.provenance, isotonic_shift=shift), e.fits)


def survival_curves(data: PanelDataset, policy: Policy, estimator: str = "tmle",
                    learners=None, folds=None, horizons: Sequence[int] | None = None, *,
                    band_replicates: int = 1000, alpha: float = 0.05, seed: int = 0,
                    truncation: float | None = None, ratio_learners=None,
                    censoring_learners=None, isotonic: bool = True,
                    ratios: RatioEstimates | None = None) -> SurvivalCurve:
    """One estimate per horizon with pointwise intervals and simultaneous bands."""
    if not data.is_survival:
        raise EstimationError("survival curves need a survival outcome")
    if data.censoring is None:
        raise EstimationError("survival curves need a censoring column")
    horizons = list(range(1, data.n_times + 1)) if horizons is None else list(horizons)
    for h in horizons:
        if not 1 <= h <= data.n_times:
            raise EstimationError(f"horizon {h} outside 1..{data.n_times}")
    folds = _resolve_folds(folds, data, seed)
    if estimator != "gcomp" and ratios is None:
        ratios = estimate_ratios(data, policy, ratio_learners if ratio_learners is not None
                                 else learners, folds, censoring_learners, truncation, seed)
    ests = []
    for h in horizons:
        kw = dict(horizon=h, alpha=alpha, seed=seed)
        if estimator in ("tmle", "sdr"):
            kw.update(ratio_learners=ratio_learners, censoring_learners=censoring_learners)
        ests.append(estimate(estimator, data, policy, learners, folds, ratios, **kw))
    return _curve_from(ests, horizons, alpha, band_replicates, seed, isotonic)


def curve_difference(a: SurvivalCurve, b: SurvivalCurve, band_replicates: int = 1000,
                     seed: int = 0) -> SurvivalCurve:
    """Incidence-difference curve ``a - b`` with its own simultaneous band."""
    if a.horizons != b.horizons:
        raise EstimationError("curves have different horizons")
    diffs = [contrast(x, y, "difference") for x, y in zip(a.estimates, b.estimates)]
    alpha = a.estimates[0].alpha
    return _curve_from(diffs, a.horizons, alpha, band_replicates, seed, isotonic=False)
