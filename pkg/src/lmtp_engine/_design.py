"""Shared plumbing: feature matrices per time, vectorised policy evaluation, cross-fitting."""

from __future__ import annotations

from dataclasses import replace
from typing import Mapping, Sequence

import numpy as np

from .errors import EstimationError, LearnerError
from .learners import FoldAssignment, LearnerSpec, fit_stack, resolve_features
from .panel import PanelDataset
from .policy import HistoryFrame, Policy, unit_keys

Stack = Sequence[LearnerSpec]
DEFAULT_STACK: tuple[LearnerSpec, ...] = (LearnerSpec("glm"),)


def stack_for(learners, t: int) -> list[LearnerSpec]:
    """Learner list for time ``t``; ``learners`` may map times to lists with a ``default``."""
    if learners is None:
        return list(DEFAULT_STACK)
    if isinstance(learners, LearnerSpec):
        return [learners]
    if isinstance(learners, Mapping):
        chosen = learners.get(t, learners.get(str(t), learners.get("default")))
        if chosen is None:
            raise EstimationError(f"no learners configured for time {t}")
        return stack_for(chosen, t)
    return list(learners)


def exposure_col(data: PanelDataset, t: int) -> str:
    return f"{data.exposure_name}_{t}"


def available_columns(data: PanelDataset, t: int, with_exposure: bool = True) -> list[str]:
    cols = data.history_columns(t)
    return cols + [exposure_col(data, t)] if with_exposure else cols


def feature_columns(data: PanelDataset, t: int, spec: LearnerSpec,
                    with_exposure: bool = True) -> list[str]:
    return resolve_features(spec.features, spec.drop, available_columns(data, t, with_exposure),
                            t, baseline=list(data.baseline))


def matrix(data: PanelDataset, cols: Sequence[str], rows: np.ndarray,
           overrides: Mapping[str, np.ndarray] | None = None) -> np.ndarray:
    """Columns ``cols`` for units ``rows``; ``overrides`` replace whole columns."""
    overrides = overrides or {}
    if not len(cols):
        return np.zeros((int(np.sum(rows)) if rows.dtype == bool else len(rows), 0))
    parts = [(overrides[c] if c in overrides else data.column(c))[rows] for c in cols]
    return np.column_stack(parts).astype(float)


def history_frame(data: PanelDataset, t: int,
                  overrides: Mapping[str, np.ndarray] | None = None) -> HistoryFrame:
    overrides = overrides or {}
    cols = {c: (overrides[c] if c in overrides else data.column(c))
            for c in data.history_columns(t)}
    return HistoryFrame(t, cols, data.exposure_name, size=data.n_units)


def keys_of(data: PanelDataset) -> np.ndarray:
    ids = np.asarray(data.unit_ids)
    if ids.dtype.kind in "iu":
        return ids.astype(np.int64)
    return unit_keys(ids.tolist())


def apply_policy(policy: Policy, data: PanelDataset, t: int,
                 overrides: Mapping[str, np.ndarray] | None = None) -> np.ndarray:
    """One draw of ``A_t^d`` for every unit (nan where ``A_t`` is unavailable)."""
    hist = history_frame(data, t, overrides)
    with np.errstate(invalid="ignore"):
        return policy.apply(t, data.exposure[:, t], hist, keys=keys_of(data))


def policy_components(policy: Policy, data: PanelDataset, t: int,
                      overrides: Mapping[str, np.ndarray] | None = None
                      ) -> list[tuple[np.ndarray, float]]:
    hist = history_frame(data, t, overrides)
    with np.errstate(invalid="ignore"):
        return policy.components(t, data.exposure[:, t], hist, keys=keys_of(data))


def counterfactual_exposures(policy: Policy, data: PanelDataset, upto: int) -> dict[str, np.ndarray]:
    """``A_s^d`` for ``s < upto`` computed along counterfactual histories."""
    out: dict[str, np.ndarray] = {}
    for s in range(upto):
        out[exposure_col(data, s)] = apply_policy(policy, data, s, out)
    return out


def check_domain(data: PanelDataset, values: np.ndarray, rows: np.ndarray, what: str):
    v = values[rows]
    if data.exposure_kind in ("binary", "categorical"):
        levels = np.asarray(data.exposure_levels, dtype=float)
        bad = ~np.isin(v, levels)
        if bad.any():
            raise EstimationError(
                f"{what} produced exposure value {v[bad][0]!r} outside the "
                f"{data.exposure_kind} levels {tuple(levels)}")
    elif not np.all(np.isfinite(v)):
        raise EstimationError(f"{what} produced non-finite exposure values")


def stack_columns(data: PanelDataset, t: int, specs: Stack,
                  with_exposure: bool = True) -> tuple[list[str], list[LearnerSpec]]:
    """Union of the columns the stack needs, and specs rewritten to absolute names."""
    cols: list[str] = []
    fixed = []
    for spec in specs:
        own = feature_columns(data, t, spec, with_exposure)
        cols.extend(c for c in own if c not in cols)
        fixed.append(replace(spec, features=tuple(own), drop=()))
    order = available_columns(data, t, with_exposure)
    return sorted(cols, key=order.index), fixed


def crossfit(specs: Stack, names: Sequence[str], fit_X: np.ndarray, y: np.ndarray,
             w: np.ndarray | None, fit_units: np.ndarray,
             preds: Sequence[tuple[np.ndarray, np.ndarray]], folds: FoldAssignment | None,
             task: str, seed: int = 0, force_task: bool = False) -> list[np.ndarray]:
    """Fit on ``fit_X`` and predict each ``(X, units)`` block out of fold.

    ``fit_units`` / ``units`` hold unit indices so that every prediction comes
    from a model trained without that unit's fold.
    """
    outs = [np.full(X.shape[0], np.nan) for X, _ in preds]
    groups = [None] if folds is None else range(folds.k)
    for j in groups:
        tr = np.ones(len(y), dtype=bool) if j is None else folds.fold[fit_units] != j
        if not tr.any():
            raise EstimationError(f"fold {j} leaves no training rows")
        try:
            model = fit_stack(specs, fit_X[tr], y[tr], None if w is None else w[tr],
                              task=task, seed=seed, names=names, force_task=force_task)
        except LearnerError as exc:
            raise EstimationError(f"nuisance fit failed: {exc}") from exc
        for out, (X, units) in zip(outs, preds):
            te = np.ones(len(units), dtype=bool) if j is None else folds.fold[units] == j
            if te.any():
                out[te] = model.predict(X[te], names)
    return outs
