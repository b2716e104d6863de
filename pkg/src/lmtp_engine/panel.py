"""Longitudinal panel data: loading, validation, and history views.

A panel holds ``n`` units observed on a discrete grid ``t = 0..tau``. At each
time the ordering of measurements is::

    L_t  ->  A_t  ->  C_t  ->  Y_t

where ``C_t = 1`` means the unit is still observed at ``t + 1`` (and, for
survival outcomes, that ``Y_t`` is observed). A terminal outcome ``Y`` is
measured after ``C_tau``. Time-varying columns are named ``{base}_{t}`` in the
wide layout, which is also the canonical in-memory layout.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    ExposureKindError,
    ParseError,
    SchemaError,
    UnavailableHistoryError,
    ValidationError,
)

EXPOSURE_KINDS = ("binary", "categorical", "continuous")
OUTCOME_TYPES = ("binary", "continuous", "survival")

_SCHEMA_KEYS = {
    "unit", "time", "baseline", "covariates", "exposure", "exposure_kind",
    "exposure_levels", "censoring", "outcome", "outcome_type", "layout",
    "delimiter",
}


@dataclass(frozen=True)
class Schema:
    """Mapping from column roles to column names.

    ``covariates`` are time-varying base names; in the wide layout the file
    holds ``{base}_{t}`` columns. ``time`` is only used by the long layout.
    """

    unit: str
    exposure: str
    outcome: str
    exposure_kind: str = "binary"
    exposure_levels: tuple[float, ...] | None = None
    outcome_type: str = "binary"
    covariates: tuple[str, ...] = ()
    baseline: tuple[str, ...] = ()
    censoring: str | None = None
    time: str | None = None
    layout: str = "wide"
    delimiter: str = ","

    def __post_init__(self):
        if self.exposure_kind not in EXPOSURE_KINDS:
            raise SchemaError(f"unknown exposure kind {self.exposure_kind!r}")
        if self.outcome_type not in OUTCOME_TYPES:
            raise SchemaError(f"unknown outcome type {self.outcome_type!r}")
        if self.layout not in ("wide", "long"):
            raise SchemaError(f"unknown layout {self.layout!r}")
        if self.layout == "long" and not self.time:
            raise SchemaError("long layout requires a 'time' column role")
        names = [self.exposure, self.outcome, *self.covariates, *self.baseline]
        if self.censoring:
            names.append(self.censoring)
        if len(set(names)) != len(names):
            raise SchemaError("a column name is assigned to more than one role")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> Schema:
        unknown = set(mapping) - _SCHEMA_KEYS
        if unknown:
            raise SchemaError(f"unknown schema keys: {sorted(unknown)}")
        missing = {"unit", "exposure", "outcome"} - set(mapping)
        if missing:
            raise SchemaError(f"schema must name roles: {sorted(missing)}")
        kw = dict(mapping)
        for key in ("covariates", "baseline"):
            if key in kw:
                kw[key] = tuple(kw[key])
        if kw.get("exposure_levels") is not None:
            kw["exposure_levels"] = tuple(float(v) for v in kw["exposure_levels"])
        return cls(**kw)


@dataclass(frozen=True)
class ValidationReport:
    """What the loader changed while validating."""

    locf_filled: Mapping[str, int] = field(default_factory=dict)
    masked_after_event: int = 0
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class HistoryView:
    """The ordered history ``H_t`` of one unit: ``(L_0, A_0, ..., L_t)``."""

    unit: Any
    t: int
    items: tuple[tuple[str, float], ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.items)

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(value for _, value in self.items)

    def as_dict(self) -> dict[str, float]:
        return dict(self.items)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


def _arrays_equal(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        return False
    if a.dtype.kind in "fc" or b.dtype.kind in "fc":
        return bool(np.array_equal(a.astype(float), b.astype(float), equal_nan=True))
    return bool(np.array_equal(a, b))


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Validated, immutable wide panel.

    Arrays are ``(n, tau + 1)`` for time-varying quantities and ``(n,)`` for
    baseline ones. Unavailable cells hold ``nan``.
    """

    unit_ids: np.ndarray
    horizon: int
    exposure: np.ndarray
    outcome: np.ndarray
    exposure_kind: str = "binary"
    exposure_levels: tuple[float, ...] | None = None
    outcome_type: str = "binary"
    covariates: Mapping[str, np.ndarray] = field(default_factory=dict)
    baseline: Mapping[str, np.ndarray] = field(default_factory=dict)
    censoring: np.ndarray | None = None
    exposure_name: str = "A"
    outcome_name: str = "Y"
    censoring_name: str = "C"
    outcome_range: tuple[float, float] | None = None
    report: ValidationReport = field(default_factory=ValidationReport)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "unit_ids", _readonly(self.unit_ids))
        set_(self, "exposure", _readonly(np.asarray(self.exposure, dtype=float)))
        set_(self, "outcome", _readonly(np.asarray(self.outcome, dtype=float)))
        set_(self, "covariates", {k: _readonly(np.asarray(v, dtype=float))
                                  for k, v in self.covariates.items()})
        set_(self, "baseline", {k: _readonly(np.asarray(v, dtype=float))
                                for k, v in self.baseline.items()})
        if self.censoring is not None:
            set_(self, "censoring", _readonly(np.asarray(self.censoring, dtype=float)))
        if self.exposure_kind == "binary" and self.exposure_levels is None:
            set_(self, "exposure_levels", (0.0, 1.0))
        if self.exposure_levels is not None:
            set_(self, "exposure_levels", tuple(float(v) for v in self.exposure_levels))
        n, T = self.exposure.shape
        if T != self.horizon + 1:
            raise ValidationError(f"exposure has {T} columns, expected {self.horizon + 1}")
        for name, arr in self.covariates.items():
            if arr.shape != (n, T):
                raise ValidationError(f"covariate {name!r} has shape {arr.shape}")
        for name, arr in self.baseline.items():
            if arr.shape != (n,):
                raise ValidationError(f"baseline {name!r} has shape {arr.shape}")
        if self.censoring is not None and self.censoring.shape != (n, T):
            raise ValidationError("censoring has the wrong shape")
        expected = (n, T) if self.outcome_type == "survival" else (n,)
        if self.outcome.shape != expected:
            raise ValidationError(f"outcome has shape {self.outcome.shape}, expected {expected}")
        if self.outcome_range is None:
            obs = self.outcome[np.isfinite(self.outcome)]
            rng = (float(obs.min()), float(obs.max())) if obs.size else (0.0, 1.0)
            if self.outcome_type != "continuous":
                rng = (0.0, 1.0)
            set_(self, "outcome_range", rng)

    # -- shape ---------------------------------------------------------------
    @property
    def n_units(self) -> int:
        return self.exposure.shape[0]

    @property
    def n_times(self) -> int:
        return self.horizon + 1

    @property
    def is_survival(self) -> bool:
        return self.outcome_type == "survival"

    # -- risk sets -------------------------------------------------------------
    def at_risk(self, t: int) -> np.ndarray:
        """Units whose ``A_t`` is observed: uncensored and event-free before ``t``."""
        mask = np.ones(self.n_units, dtype=bool)
        if t > 0:
            if self.censoring is not None:
                mask &= np.all(self.censoring[:, :t] == 1, axis=1)
            if self.is_survival:
                mask &= np.all(self.outcome[:, :t] == 0, axis=1)
        return mask

    def observed(self, t: int) -> np.ndarray:
        """At-risk units that remain observed after ``t`` (``C_t = 1``)."""
        mask = self.at_risk(t)
        if self.censoring is not None:
            mask &= self.censoring[:, t] == 1
        return mask

    def outcome_at(self, t: int) -> np.ndarray:
        """Outcome measured at the end of interval ``t`` (terminal ``Y`` at ``tau``)."""
        if self.is_survival:
            return self.outcome[:, t]
        if t != self.horizon:
            return np.zeros(self.n_units)
        return self.outcome

    # -- history -----------------------------------------------------------------
    def history_columns(self, t: int) -> list[str]:
        """Absolute column names making up ``H_t`` in time order."""
        self._check_time(t)
        cols = list(self.baseline)
        for s in range(t + 1):
            cols.extend(f"{c}_{s}" for c in self.covariates)
            if s < t:
                cols.append(f"{self.exposure_name}_{s}")
        return cols

    def column(self, name: str) -> np.ndarray:
        """Values of an absolute column name such as ``L_1`` or a baseline name."""
        if name in self.baseline:
            return self.baseline[name]
        base, _, suffix = name.rpartition("_")
        if base and suffix.isdigit():
            s = int(suffix)
            if s <= self.horizon:
                if base in self.covariates:
                    return self.covariates[base][:, s]
                if base == self.exposure_name:
                    return self.exposure[:, s]
                if base == self.censoring_name and self.censoring is not None:
                    return self.censoring[:, s]
                if base == self.outcome_name and self.is_survival:
                    return self.outcome[:, s]
        raise KeyError(name)

    def history_table(self, t: int, include_exposure: bool = True) -> pd.DataFrame:
        """All units' ``H_t`` (and ``A_t``) as a frame; unavailable rows hold nan."""
        cols = self.history_columns(t)
        if include_exposure:
            cols = cols + [f"{self.exposure_name}_{t}"]
        return pd.DataFrame({c: self.column(c) for c in cols})

    def _check_time(self, t: int):
        if not 0 <= t <= self.horizon:
            raise IndexError(f"time {t} outside 0..{self.horizon}")

    def unit_index(self, unit) -> int:
        hits = np.flatnonzero(self.unit_ids == unit)
        if hits.size == 0:
            raise KeyError(f"unknown unit {unit!r}")
        return int(hits[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, PanelDataset):
            return NotImplemented
        scalars = ("horizon", "exposure_kind", "exposure_levels", "outcome_type",
                   "exposure_name", "outcome_name", "censoring_name")
        if any(getattr(self, k) != getattr(other, k) for k in scalars):
            return False
        if list(self.covariates) != list(other.covariates):
            return False
        if list(self.baseline) != list(other.baseline):
            return False
        pairs = [(self.unit_ids, other.unit_ids), (self.exposure, other.exposure),
                 (self.outcome, other.outcome), (self.censoring, other.censoring)]
        pairs += [(self.covariates[k], other.covariates[k]) for k in self.covariates]
        pairs += [(self.baseline[k], other.baseline[k]) for k in self.baseline]
        return all(_arrays_equal(a, b) for a, b in pairs)

    __hash__ = None


def history_at(data: PanelDataset, unit, t: int) -> HistoryView:
    """Return ``H_t`` for one unit."""
    data._check_time(t)
    i = data.unit_index(unit)
    if not data.at_risk(t)[i]:
        raise UnavailableHistoryError(f"unit {_uid(unit)} is not observed at time {t}")
    items = tuple((c, float(data.column(c)[i])) for c in data.history_columns(t))
    return HistoryView(unit=unit, t=t, items=items)


def check_exposure_values(values: np.ndarray, kind: str,
                          levels: Sequence[float] | None) -> None:
    """Raise if any finite value is outside the exposure domain."""
    values = np.asarray(values, dtype=float)
    finite = values[~np.isnan(values)]
    if not np.all(np.isfinite(finite)):
        raise ExposureKindError("exposure values must be finite")
    if kind == "continuous":
        return
    allowed = np.asarray(levels if levels is not None else (0.0, 1.0))
    bad = finite[~np.isin(finite, allowed)]
    if bad.size:
        raise ExposureKindError(
            f"value {bad[0]!r} is not a level of the {kind} exposure {tuple(allowed)}")


def with_exposure_replaced(data: PanelDataset, t: int, new_values) -> PanelDataset:
    """Copy of ``data`` whose column ``A_t`` is ``new_values`` where observed."""
    data._check_time(t)
    new_values = np.asarray(new_values, dtype=float)
    if new_values.shape != (data.n_units,):
        raise ValueError(f"expected {data.n_units} values, got shape {new_values.shape}")
    available = ~np.isnan(data.exposure[:, t])
    check_exposure_values(new_values[available], data.exposure_kind, data.exposure_levels)
    if np.any(np.isnan(new_values[available])):
        raise ExposureKindError("replacement leaves an observed exposure empty")
    exposure = np.array(data.exposure, copy=True)
    exposure[available, t] = new_values[available]
    return dataclasses.replace(data, exposure=exposure)


def take_units(data: PanelDataset, index) -> PanelDataset:
    """Rows ``index`` of every array (repeats allowed, as in a bootstrap resample)."""
    idx = np.asarray(index, dtype=np.int64)
    return dataclasses.replace(
        data, unit_ids=np.asarray(data.unit_ids)[idx], exposure=data.exposure[idx],
        outcome=data.outcome[idx],
        covariates={k: v[idx] for k, v in data.covariates.items()},
        baseline={k: v[idx] for k, v in data.baseline.items()},
        censoring=None if data.censoring is None else data.censoring[idx])


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _parse_cell(text: str, row: int, column: str) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"column {column!r}: cannot parse {text!r} as a number", row) from None


def _read_rows(path: Path, delimiter: str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file (a header row is required)", 1) from None
        header = [h.strip() for h in header]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", lineno)
            rows.append(row)
    return header, rows


def load_panel(source: str | Path, schema: Schema | Mapping[str, Any]) -> PanelDataset:
    """Read a delimited file and return a validated :class:`PanelDataset`.

    Row numbers in errors count the header as row 1.
    """
    if not isinstance(schema, Schema):
        schema = Schema.from_mapping(schema)
    path = Path(source)
    if not path.exists():
        raise FileNotFoundError(path)
    header, rows = _read_rows(path, schema.delimiter)
    if schema.unit not in header:
        raise SchemaError(f"unit column {schema.unit!r} not found")
    if schema.layout == "long":
        return _load_long(header, rows, schema)
    return _load_wide(header, rows, schema)


def _time_columns(header: Sequence[str], base: str) -> dict[int, str]:
    out = {}
    prefix = base + "_"
    for col in header:
        if col.startswith(prefix) and col[len(prefix):].isdigit():
            out[int(col[len(prefix):])] = col
    return out


def _load_wide(header, rows, schema: Schema) -> PanelDataset:
    index = {c: j for j, c in enumerate(header)}
    exp_cols = _time_columns(header, schema.exposure)
    if not exp_cols:
        raise SchemaError(f"no exposure columns '{schema.exposure}_<t>' found")
    T = max(exp_cols) + 1
    if sorted(exp_cols) != list(range(T)):
        raise SchemaError(f"exposure columns must cover times 0..{T - 1}")

    def grid(base: str, required: bool = True) -> np.ndarray:
        cols = _time_columns(header, base)
        if required and sorted(cols) != list(range(T)):
            raise SchemaError(f"column '{base}' must have one column per time 0..{T - 1}")
        out = np.full((len(rows), T), np.nan)
        for t, col in cols.items():
            if t >= T:
                raise SchemaError(f"column {col!r} lies beyond the exposure horizon")
            j = index[col]
            out[:, t] = [_parse_cell(r[j], i + 2, col) for i, r in enumerate(rows)]
        return out

    def single(col: str) -> np.ndarray:
        if col not in index:
            raise SchemaError(f"column {col!r} not found")
        j = index[col]
        return np.array([_parse_cell(r[j], i + 2, col) for i, r in enumerate(rows)])

    units = np.array([r[index[schema.unit]].strip() for r in rows], dtype=object)
    covariates = {c: grid(c) for c in schema.covariates}
    baseline = {c: single(c) for c in schema.baseline}
    exposure = grid(schema.exposure)
    censoring = grid(schema.censoring) if schema.censoring else None
    if schema.outcome_type == "survival":
        outcome = grid(schema.outcome)
    else:
        outcome = single(schema.outcome)
    return _assemble(schema, _coerce_ids(units), T, covariates, baseline, exposure,
                     censoring, outcome)


def _load_long(header, rows, schema: Schema) -> PanelDataset:
    index = {c: j for j, c in enumerate(header)}
    needed = [schema.time, schema.exposure, schema.outcome, *schema.covariates, *schema.baseline]
    if schema.censoring:
        needed.append(schema.censoring)
    missing = [c for c in needed if c not in index]
    if missing:
        raise SchemaError(f"columns not found: {missing}")
    order: dict[str, int] = {}
    records = []
    for i, r in enumerate(rows):
        lineno = i + 2
        uid = r[index[schema.unit]].strip()
        t = _parse_cell(r[index[schema.time]], lineno, schema.time)
        if not (math.isfinite(t) and t >= 0 and float(t).is_integer()):
            raise ParseError(f"time value {r[index[schema.time]]!r} is not a non-negative integer",
                             lineno)
        order.setdefault(uid, len(order))
        records.append((uid, int(t), lineno, r))
    T = max(t for _, t, _, _ in records) + 1 if records else 1
    n = len(order)
    covariates = {c: np.full((n, T), np.nan) for c in schema.covariates}
    baseline = {c: np.full(n, np.nan) for c in schema.baseline}
    exposure = np.full((n, T), np.nan)
    censoring = np.full((n, T), np.nan) if schema.censoring else None
    survival = schema.outcome_type == "survival"
    outcome = np.full((n, T), np.nan) if survival else np.full(n, np.nan)
    seen = set()
    for uid, t, lineno, r in records:
        i = order[uid]
        if (uid, t) in seen:
            raise ParseError(f"duplicate row for unit {uid!r} at time {t}", lineno)
        seen.add((uid, t))
        cell = lambda col: _parse_cell(r[index[col]], lineno, col)  # noqa: E731
        for c in schema.covariates:
            covariates[c][i, t] = cell(c)
        for c in schema.baseline:
            v = cell(c)
            if not math.isnan(v):
                if not math.isnan(baseline[c][i]) and baseline[c][i] != v:
                    raise ValidationError(f"baseline {c!r} varies over time for unit {uid!r}")
                baseline[c][i] = v
        exposure[i, t] = cell(schema.exposure)
        if censoring is not None:
            censoring[i, t] = cell(schema.censoring)
        y = cell(schema.outcome)
        if survival:
            outcome[i, t] = y
        elif t == T - 1:
            outcome[i] = y
    units = np.array(list(order), dtype=object)
    return _assemble(schema, _coerce_ids(units), T, covariates, baseline, exposure,
                     censoring, outcome)


def _uid(u) -> str:
    """Unit id as it appears in the file (numpy scalars unwrapped)."""
    return repr(u.item() if isinstance(u, np.generic) else u)


def _coerce_ids(units: np.ndarray) -> np.ndarray:
    try:
        as_int = np.array([int(u) for u in units])
    except ValueError:
        return units
    if len(set(as_int.tolist())) != len(units):
        raise ValidationError("unit ids are not unique")
    return as_int


def _assemble(schema: Schema, units, T, covariates, baseline, exposure, censoring,
              outcome) -> PanelDataset:
    n = len(units)
    if len(set(units.tolist())) != n:
        raise ValidationError("unit ids are not unique")
    survival = schema.outcome_type == "survival"
    notes = []

    # rows after an event are unavailable; carry the event forward
    masked = 0
    event_free = np.ones((n, T), dtype=bool)  # no event strictly before t
    if survival:
        for i in range(n):
            y = outcome[i]
            hits = np.flatnonzero(y == 1)
            if hits.size:
                first = hits[0]
                later = y[first + 1:]
                if np.any(later == 0):
                    raise ValidationError(
                        f"unit {_uid(units[i])}: survival outcome decreases after the event at "
                        f"time {first} (events cannot un-happen)")
                outcome[i, first + 1:] = 1.0
                event_free[i, first + 1:] = False
                for arr in (exposure, censoring, *covariates.values()):
                    if arr is not None and np.any(~np.isnan(arr[i, first + 1:])):
                        masked += 1
                        arr[i, first + 1:] = np.nan
            bad = ~np.isnan(y) & ~np.isin(y, (0.0, 1.0))
            if np.any(bad):
                raise ValidationError(f"unit {_uid(units[i])}: survival outcome must be 0/1")

    # censoring monotonicity and unavailability after censoring
    present = np.ones((n, T), dtype=bool)  # A_t / L_t should be available
    if censoring is not None:
        for i in range(n):
            c = censoring[i]
            zeros = np.flatnonzero(c == 0)
            if zeros.size:
                s = zeros[0]
                if np.any(c[s + 1:] == 1):
                    raise ValidationError(
                        f"unit {_uid(units[i])}: censoring is not monotone (C_{s}=0 then observed)")
                late = [name for name, arr in
                        ((schema.exposure, exposure), *covariates.items())
                        if np.any(~np.isnan(arr[i, s + 1:]))]
                if late:
                    raise ValidationError(
                        f"unit {_uid(units[i])}: {late[0]} present after censoring at time {s}")
                if survival and np.any(~np.isnan(outcome[i, s:]) & event_free[i, s:]):
                    raise ValidationError(
                        f"unit {_uid(units[i])}: outcome present after censoring at time {s}")
                if not survival and not math.isnan(outcome[i]):
                    raise ValidationError(
                        f"unit {_uid(units[i])}: outcome present after censoring at time {s}")
                present[i, s + 1:] = False
            bad = ~np.isnan(c) & ~np.isin(c, (0.0, 1.0))
            if np.any(bad):
                raise ValidationError(f"unit {_uid(units[i])}: censoring must be 0/1")
    present &= event_free

    # required cells before censoring
    for i in range(n):
        need = present[i]
        if np.any(np.isnan(exposure[i, need])):
            t = int(np.flatnonzero(need & np.isnan(exposure[i]))[0])
            raise ValidationError(f"unit {_uid(units[i])}: exposure missing at time {t}")
        if censoring is not None and np.any(np.isnan(censoring[i, need])):
            t = int(np.flatnonzero(need & np.isnan(censoring[i]))[0])
            raise ValidationError(f"unit {_uid(units[i])}: censoring indicator missing at time {t}")
        observed_end = need[-1] and (censoring is None or censoring[i, -1] == 1)
        if survival:
            obs = need & (censoring[i] == 1 if censoring is not None else True)
            if np.any(np.isnan(outcome[i, obs])):
                raise ValidationError(f"unit {_uid(units[i])}: survival outcome missing")
        elif observed_end and math.isnan(outcome[i]):
            raise ValidationError(f"unit {_uid(units[i])}: outcome missing for an observed unit")
    if schema.exposure_kind == "categorical" and schema.exposure_levels is None:
        raise SchemaError("categorical exposure requires exposure_levels")
    levels = schema.exposure_levels if schema.exposure_kind == "categorical" else (0.0, 1.0)
    check_exposure_values(exposure[present], schema.exposure_kind, levels)
    if schema.outcome_type == "binary":
        y = outcome[~np.isnan(outcome)]
        if np.any(~np.isin(y, (0.0, 1.0))):
            raise ValidationError("binary outcome contains values other than 0/1")

    # missing covariates before censoring: last observation carried forward + indicator
    filled = {}
    for name in list(covariates):
        arr = covariates[name]
        gaps = np.isnan(arr) & present
        if not gaps.any():
            continue
        indicator = np.where(present, gaps.astype(float), np.nan)
        for i, t in zip(*np.nonzero(gaps)):
            prev = arr[i, :t][~np.isnan(arr[i, :t])]
            arr[i, t] = prev[-1] if prev.size else 0.0
        filled[name] = int(gaps.sum())
        covariates[f"{name}_missing"] = indicator
        notes.append(f"{name}: {filled[name]} cells filled by last observation carried "
                     f"forward; indicator column {name}_missing added")
    for name, arr in baseline.items():
        if np.any(np.isnan(arr)):
            raise ValidationError(f"baseline covariate {name!r} has missing values")
    if masked:
        notes.append(f"{masked} unit(s) had values after their event; marked unavailable")

    obs_y = outcome[~np.isnan(outcome)]
    if schema.outcome_type == "continuous":
        rng = (float(obs_y.min()), float(obs_y.max())) if obs_y.size else (0.0, 1.0)
    else:
        rng = (0.0, 1.0)
    return PanelDataset(
        unit_ids=units,
        horizon=T - 1,
        exposure=exposure,
        outcome=outcome,
        exposure_kind=schema.exposure_kind,
        exposure_levels=schema.exposure_levels,
        outcome_type=schema.outcome_type,
        covariates=covariates,
        baseline=baseline,
        censoring=censoring,
        exposure_name=schema.exposure,
        outcome_name=schema.outcome,
        censoring_name=schema.censoring or "C",
        outcome_range=rng,
        report=ValidationReport(locf_filled=filled, masked_after_event=masked,
                                notes=tuple(notes)),
    )


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    if isinstance(v, str):
        return v
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_table(data: PanelDataset, layout: str = "wide") -> pd.DataFrame:
    """Logical table of ``data`` in the given layout (unit column named ``id``)."""
    if layout == "wide":
        cols: dict[str, Iterable] = {"id": data.unit_ids}
        cols.update(data.baseline)
        for t in range(data.n_times):
            for c, arr in data.covariates.items():
                cols[f"{c}_{t}"] = arr[:, t]
            cols[f"{data.exposure_name}_{t}"] = data.exposure[:, t]
            if data.censoring is not None:
                cols[f"{data.censoring_name}_{t}"] = data.censoring[:, t]
            if data.is_survival:
                cols[f"{data.outcome_name}_{t}"] = data.outcome[:, t]
        if not data.is_survival:
            cols[data.outcome_name] = data.outcome
        return pd.DataFrame(cols)
    if layout != "long":
        raise ValueError(f"unknown layout {layout!r}")
    records = []
    for i in range(data.n_units):
        for t in range(data.n_times):
            row = {"id": data.unit_ids[i], "time": t}
            row.update({c: arr[i] for c, arr in data.baseline.items()})
            row.update({c: arr[i, t] for c, arr in data.covariates.items()})
            row[data.exposure_name] = data.exposure[i, t]
            if data.censoring is not None:
                row[data.censoring_name] = data.censoring[i, t]
            if data.is_survival:
                row[data.outcome_name] = data.outcome[i, t]
            else:
                row[data.outcome_name] = data.outcome[i] if t == data.horizon else math.nan
            records.append(row)
    return pd.DataFrame.from_records(records)


def write_panel(data: PanelDataset, path: str | Path, layout: str = "wide",
                delimiter: str = ",") -> None:
    """Serialize ``data`` so that :func:`load_panel` reads it back unchanged."""
    table = to_table(data, layout)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(table.columns)
        for row in table.itertuples(index=False):
            writer.writerow([_fmt(v) for v in row])


def schema_for(data: PanelDataset, layout: str = "wide") -> Schema:
    """Schema matching the files produced by :func:`write_panel`."""
    return Schema(
        unit="id",
        time="time" if layout == "long" else None,
        layout=layout,
        exposure=data.exposure_name,
        exposure_kind=data.exposure_kind,
        exposure_levels=data.exposure_levels if data.exposure_kind == "categorical" else None,
        outcome=data.outcome_name,
        outcome_type=data.outcome_type,
        covariates=tuple(data.covariates),
        baseline=tuple(data.baseline),
        censoring=data.censoring_name if data.censoring is not None else None,
    )
