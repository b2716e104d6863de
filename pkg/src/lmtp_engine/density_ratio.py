"""Density ratios ``r_t = g_t^d(a_t | h_t) / g_t(a_t | h_t)`` by probabilistic classification.

Each at-risk row is duplicated: the original keeps the observed exposure and
label ``0``; the copy carries ``A_t^d`` and label ``1``. The odds of label 1
given ``(A_t, H_t)`` estimate the ratio. Censoring is treated as a second
intervened variable (set to "observed"), contributing ``C_t / P(C_t = 1 | A_t, H_t)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd

from . import _design as D
from .errors import EstimationError, PositivityError
from .learners import PROB_CLIP, FoldAssignment
from .panel import PanelDataset
from .policy import Policy


@dataclass(frozen=True)
class ClassificationFrame:
    """Stacked original (label 0) and policy-shifted (label 1) rows for one time."""

    t: int
    columns: tuple[str, ...]
    X: np.ndarray
    label: np.ndarray
    units: np.ndarray
    exposure_column: str

    @property
    def n_pairs(self) -> int:
        return int((self.label == 0).sum())

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=list(self.columns))
        df.insert(0, "unit", self.units)
        df["label"] = self.label
        return df


def build_ratio_frame(data: PanelDataset, policy: Policy, t: int,
                      counterfactual_history: bool = False) -> ClassificationFrame:
    """Duplicate the at-risk rows at ``t`` and replace the copy's exposure by ``A_t^d``.

    With ``counterfactual_history`` the policy sees earlier exposures already
    replaced by their policy values; otherwise it sees the observed history,
    which is what the sequential regression conditions on.
    """
    if policy.exposure_kind is not None and policy.exposure_kind != data.exposure_kind:
        raise EstimationError(f"policy declared for {policy.exposure_kind} exposure but the "
                              f"data exposure is {data.exposure_kind}")
    rows = data.at_risk(t)
    units = np.flatnonzero(rows)
    overrides = D.counterfactual_exposures(policy, data, t) if counterfactual_history else {}
    shifted = D.apply_policy(policy, data, t, overrides)
    D.check_domain(data, shifted, rows, "policy")
    cols = D.available_columns(data, t)
    a_col = D.exposure_col(data, t)
    X0 = D.matrix(data, cols, rows)
    X1 = D.matrix(data, cols, rows, {a_col: shifted})
    return ClassificationFrame(
        t=t, columns=tuple(cols), X=np.vstack([X0, X1]),
        label=np.concatenate([np.zeros(len(units)), np.ones(len(units))]),
        units=np.concatenate([units, units]), exposure_column=a_col)


def _odds(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, PROB_CLIP, 1 - PROB_CLIP)
    return p / (1 - p)


def fit_ratio(frame: ClassificationFrame, learners=None, folds: FoldAssignment | None = None,
              seed: int = 0, data: PanelDataset | None = None) -> np.ndarray:
    """Cross-fitted odds ``p/(1-p)`` for each original row of ``frame``.

    Returns one ratio per label-0 row, in the order of ``frame.units``.
    Both copies of a unit share its fold, so no unit's prediction comes from a
    model trained on either of its rows.
    """
    lab = frame.label
    if lab.size == 0:
        raise EstimationError(f"no at-risk rows at time {frame.t}")
    if lab.min() == lab.max():
        raise EstimationError("degenerate classification frame: only one label present")
    specs = D.stack_for(learners, frame.t)
    names = list(frame.columns)
    if data is not None:
        cols, specs = D.stack_columns(data, frame.t, specs)
    else:
        cols = names
    idx = [names.index(c) for c in cols]
    X = frame.X[:, idx]
    orig = lab == 0
    (p,) = D.crossfit(specs, cols, X, lab, None, frame.units,
                      [(X[orig], frame.units[orig])], folds, "binomial", seed)
    return _odds(p)


def fit_censoring(data: PanelDataset, t: int, learners=None,
                  folds: FoldAssignment | None = None, seed: int = 0) -> np.ndarray:
    """Cross-fitted ``P(C_t = 1 | A_t, H_t)`` for every at-risk unit (nan elsewhere)."""
    out = np.full(data.n_units, np.nan)
    if data.censoring is None:
        return out
    rows = data.at_risk(t)
    units = np.flatnonzero(rows)
    c = data.censoring[rows, t]
    if c.min() == c.max():
        out[rows] = float(c[0])
        return out
    cols, specs = D.stack_columns(data, t, D.stack_for(learners, t))
    X = D.matrix(data, cols, rows)
    (p,) = D.crossfit(specs, cols, X, c, None, units, [(X, units)], folds, "binomial", seed)
    out[rows] = np.clip(p, 0.0, 1.0)
    return out


@dataclass(frozen=True)
class RatioEstimates:
    """Per-time ratios and cumulative weights, shape ``(n, T)``.

    ``weights[:, t]`` is ``prod_{s <= t} r_s * C_s / P(C_s = 1 | A_s, H_s)``;
    it is zero once a unit is censored or no longer at risk.
    """

    ratios: np.ndarray
    weights: np.ndarray
    censoring_prob: np.ndarray | None = None
    censoring_factor: np.ndarray | None = None
    truncation: float | None = None
    caps: tuple[float, ...] = ()
    folds: FoldAssignment | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def n_times(self) -> int:
        return self.ratios.shape[1]


def cumulate_ratios(ratios, censoring_prob=None, censoring=None, at_risk=None,
                    **meta) -> RatioEstimates:
    """Compose per-time ratios (and censoring factors) into cumulative weights.

    Parameters
    ----------
    ratios : array-like, shape (n, T) or list of per-time arrays
        ``nan`` marks units not at risk.
    censoring_prob : array-like, shape (n, T), optional
        Estimated ``P(C_t = 1 | A_t, H_t)``.
    censoring : array-like, shape (n, T), optional
        Observed ``C_t``; required with ``censoring_prob`` to zero censored units.
    at_risk : array-like of bool, shape (n, T), optional
    """
    r = np.asarray(ratios, dtype=float)
    if r.ndim == 1:
        r = r.reshape(1, -1)
    if isinstance(ratios, (list, tuple)) and np.ndim(ratios[0]) == 1:
        r = np.column_stack([np.asarray(x, dtype=float) for x in ratios])
    n, T = r.shape
    risk = np.isfinite(r) if at_risk is None else np.asarray(at_risk, dtype=bool)
    factor = np.where(risk, np.nan_to_num(r, nan=0.0), 0.0)
    if np.any(factor < 0):
        raise EstimationError("density ratios must be non-negative")
    gc = None
    cfac = np.ones((n, T))
    if censoring_prob is not None:
        gc = np.asarray(censoring_prob, dtype=float).reshape(n, T)
        cens = np.ones((n, T)) if censoring is None else np.asarray(censoring, dtype=float)
        cens = np.where(np.isfinite(cens), cens, 0.0)
        stays = risk & (cens == 1)
        zero = stays & ~(gc > 0)
        if zero.any():
            i, t = np.argwhere(zero)[0]
            raise PositivityError(f"estimated probability of remaining uncensored is 0 for "
                                  f"unit index {i} at time {t}")
        cfac = np.where(stays, 1.0 / np.where(stays, gc, 1.0), 0.0)
        factor = factor * cfac
    w = np.cumprod(factor, axis=1)
    return RatioEstimates(ratios=np.where(risk, r, np.nan), weights=w, censoring_prob=gc,
                          censoring_factor=cfac, **meta)


def truncate_ratios(est: RatioEstimates, q: float) -> RatioEstimates:
    """Cap each time's ratios at their empirical ``q``-quantile and recompute weights."""
    if not 0.5 < q <= 1.0:
        raise EstimationError(f"truncation quantile must lie in (0.5, 1], got {q!r}")
    r = est.ratios.copy()
    caps = []
    for t in range(r.shape[1]):
        col = r[:, t]
        ok = np.isfinite(col)
        cap = float(np.quantile(col[ok], q, method="inverted_cdf")) if ok.any() else np.inf
        caps.append(cap)
        r[ok, t] = np.minimum(col[ok], cap)
    cfac = est.censoring_factor if est.censoring_factor is not None else np.ones(r.shape)
    w = np.cumprod(np.nan_to_num(r, nan=0.0) * cfac, axis=1)
    prov = dict(est.provenance, truncation=q)
    return replace(est, ratios=r, weights=w, truncation=q, caps=tuple(caps), provenance=prov)


def estimate_ratios(data: PanelDataset, policy: Policy, learners=None,
                    folds: FoldAssignment | None = None, censoring_learners=None,
                    truncation: float | None = None, seed: int = 0,
                    counterfactual_history: bool = False) -> RatioEstimates:
    """Fit ``r_t`` for every time (and censoring models) and cumulate."""
    T = data.n_times
    r = np.full((data.n_units, T), np.nan)
    risk = np.zeros((data.n_units, T), dtype=bool)
    for t in range(T):
        frame = build_ratio_frame(data, policy, t, counterfactual_history)
        units = frame.units[frame.label == 0]
        r[units, t] = fit_ratio(frame, learners, folds, seed, data=data)
        risk[units, t] = True
    gc = None
    if data.censoring is not None:
        gc = np.column_stack([fit_censoring(data, t, censoring_learners or learners, folds, seed)
                              for t in range(T)])
    meta = dict(folds=folds, provenance={"policy": str(policy), "seed": seed,
                                         "cross_fitted": folds is not None})
    est = cumulate_ratios(r, gc, data.censoring, at_risk=risk, **meta)
    if truncation is not None and truncation < 1.0:
        est = truncate_ratios(est, truncation)
    return est


@dataclass(frozen=True)
class PositivityReport:
    table: pd.DataFrame
    histograms: pd.DataFrame
    threshold: float


def positivity_report(est: RatioEstimates, threshold: float = 50.0,
                      bins: int = 20) -> PositivityReport:
    """Per-time summary statistics, alert counts and histogram bins of the ratios."""
    rows, hist = [], []
    for t in range(est.n_times):
        col = est.ratios[:, t]
        col = col[np.isfinite(col)]
        if col.size == 0:
            continue
        q = np.quantile(col, [0.25, 0.5, 0.75])
        rows.append({"t": t, "n": int(col.size), "min": float(col.min()), "q25": float(q[0]),
                     "median": float(q[1]), "q75": float(q[2]), "max": float(col.max()),
                     "mean": float(col.mean()), "alerts": int((col > threshold).sum())})
        counts, edges = np.histogram(col, bins=bins)
        for c, lo, hi in zip(counts, edges, edges[1:]):
            hist.append({"t": t, "bin_low": float(lo), "bin_high": float(hi), "count": int(c)})
    return PositivityReport(pd.DataFrame(rows), pd.DataFrame(hist), threshold)


def enumerate_ratio(g: np.ndarray, gd: np.ndarray) -> np.ndarray:
    """Exact ``g^d / g`` elementwise (0 where ``g^d = 0``)."""
    g = np.asarray(g, dtype=float)
    gd = np.asarray(gd, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(gd > 0, gd / g, 0.0)


__all__: Sequence[str] = (
    "ClassificationFrame", "RatioEstimates", "PositivityReport", "build_ratio_frame",
    "fit_ratio", "fit_censoring", "cumulate_ratios", "truncate_ratios", "estimate_ratios",
    "positivity_report", "enumerate_ratio",
)
