"""Known data-generating processes, counterfactual oracles and a scenario harness.

A :class:`DgpSpec` lists conditional laws in time order ``L_t -> A_t -> C_t ->
Y_t``. Each law has a linear predictor ``sum coef[term] * value(term)`` where a
term is ``1`` (intercept), a relative name (``L`` current value, ``L[-1]`` lag,
``A`` current exposure where already drawn, ``W`` baseline), ``t``, or a
product such as ``A*L``. Values before time 0 are taken as 0.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.special import expit, ndtri

from .errors import DgpError, EstimationError
from .learners import LearnerSpec
from .panel import PanelDataset, ValidationReport
from .policy import HistoryFrame, Policy

LAWS = ("bernoulli", "normal", "categorical")


@dataclass(frozen=True)
class Law:
    """Conditional law of one variable given the history.

    Parameters
    ----------
    law : {"bernoulli", "normal", "categorical"}
    coef : mapping of term to coefficient
        Linear predictor (for categorical: one mapping per non-reference level
        in ``category_coefs``; ``coef`` is unused).
    link : {"logit", "identity"}
        Bernoulli link.
    sd : float
        Normal standard deviation.
    levels : tuple of float
        Categorical support; the first level is the reference.
    """

    law: str = "bernoulli"
    coef: Mapping[str, float] = field(default_factory=dict)
    link: str = "logit"
    sd: float = 1.0
    levels: tuple[float, ...] = (0.0, 1.0)
    category_coefs: tuple[Mapping[str, float], ...] = ()

    def __post_init__(self):
        if self.law not in LAWS:
            raise DgpError(f"unknown law {self.law!r}")
        if self.link not in ("logit", "identity"):
            raise DgpError(f"unknown link {self.link!r}")
        if self.law == "normal" and not self.sd > 0:
            raise DgpError("normal law needs sd > 0")
        if self.law == "categorical" and len(self.category_coefs) != len(self.levels) - 1:
            raise DgpError("categorical law needs one coefficient map per non-reference level")
        object.__setattr__(self, "coef", dict(self.coef))
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        object.__setattr__(self, "category_coefs", tuple(dict(c) for c in self.category_coefs))
        for c in [self.coef, *self.category_coefs]:
            if not all(math.isfinite(v) for v in c.values()):
                raise DgpError("coefficients must be finite")

    @property
    def discrete(self) -> bool:
        return self.law != "normal"

    def terms(self) -> set[str]:
        out = set()
        for c in [self.coef, *self.category_coefs]:
            for term in c:
                out.update(p.strip() for p in term.split("*"))
        return out - {"1", "t"}

    @classmethod
    def from_mapping(cls, m: Mapping) -> Law:
        unknown = set(m) - set(cls.__dataclass_fields__)
        if unknown:
            raise DgpError(f"unknown law keys: {sorted(unknown)}")
        m = dict(m)
        if "levels" in m:
            m["levels"] = tuple(m["levels"])
        if "category_coefs" in m:
            m["category_coefs"] = tuple(m["category_coefs"])
        return cls(**m)


@dataclass(frozen=True)
class DgpSpec:
    """Fully known joint law of ``(W, L_0, A_0, C_0, ..., L_tau, A_tau, C_tau, Y)``."""

    horizon: int
    covariates: Mapping[str, Law]
    exposure: Law
    outcome: Law
    outcome_type: str = "binary"
    baseline: Mapping[str, Law] = field(default_factory=dict)
    censoring: Law | None = None
    exposure_kind: str = "binary"
    name: str = ""

    def __post_init__(self):
        if self.horizon < 0:
            raise DgpError("horizon must be >= 0")
        if self.outcome_type not in ("binary", "continuous", "survival"):
            raise DgpError(f"unknown outcome type {self.outcome_type!r}")
        if self.exposure_kind not in ("binary", "categorical", "continuous"):
            raise DgpError(f"unknown exposure kind {self.exposure_kind!r}")
        expected = {"binary": "bernoulli", "categorical": "categorical",
                    "continuous": "normal"}[self.exposure_kind]
        if self.exposure.law != expected:
            raise DgpError(f"{self.exposure_kind} exposure needs a {expected} law")
        if self.outcome_type == "survival" and self.outcome.law != "bernoulli":
            raise DgpError("survival outcomes need a bernoulli hazard")
        if self.censoring is not None and self.censoring.law != "bernoulli":
            raise DgpError("censoring needs a bernoulli law")
        object.__setattr__(self, "covariates", dict(self.covariates))
        object.__setattr__(self, "baseline", dict(self.baseline))
        known = set(self.covariates) | set(self.baseline) | {"A", "Y"}
        for name, law in self._all_laws():
            for term in law.terms():
                base = term.split("[")[0]
                if base not in known:
                    raise DgpError(f"law of {name} references unknown variable {term!r}")

    def _all_laws(self):
        yield from self.baseline.items()
        yield from self.covariates.items()
        yield "A", self.exposure
        if self.censoring is not None:
            yield "C", self.censoring
        yield "Y", self.outcome

    @property
    def discrete(self) -> bool:
        laws = [law for _, law in self._all_laws() if law is not self.outcome]
        return all(law.discrete for law in laws)

    @property
    def variables(self) -> set[str]:
        return set(self.covariates) | set(self.baseline) | {"A"}

    @classmethod
    def from_mapping(cls, m: Mapping) -> DgpSpec:
        allowed = set(cls.__dataclass_fields__)
        unknown = set(m) - allowed
        if unknown:
            raise DgpError(f"unknown DGP keys: {sorted(unknown)}")
        m = dict(m)
        for key in ("exposure", "outcome", "censoring"):
            if key in m and m[key] is not None:
                m[key] = Law.from_mapping(m[key])
        for key in ("covariates", "baseline"):
            if key in m:
                m[key] = {k: Law.from_mapping(v) for k, v in m[key].items()}
        try:
            return cls(**m)
        except TypeError as exc:
            raise DgpError(str(exc)) from None


# ---------------------------------------------------------------------------
# Evaluating laws on (vectorised) histories
# ---------------------------------------------------------------------------

class _State:
    """Columns of the (possibly counterfactual) history for many paths or units."""

    def __init__(self, size: int):
        self.size = size
        self.cols: dict[str, np.ndarray] = {}

    def value(self, term: str, t: int, spec: DgpSpec) -> np.ndarray:
        if term == "1":
            return np.ones(self.size)
        if term == "t":
            return np.full(self.size, float(t))
        name, lag = term, 0
        if "[" in term:
            name, rest = term.split("[", 1)
            lag = -int(rest.rstrip("]"))
        if name in spec.baseline:
            return self.cols[name]
        s = t - lag
        if s < 0:
            return np.zeros(self.size)
        key = f"{name}_{s}"
        if key not in self.cols:
            raise DgpError(f"{term!r} is not available when drawing at time {t}")
        return self.cols[key]

    def expand(self, k: int):
        self.cols = {c: np.repeat(v, k) for c, v in self.cols.items()}
        self.size *= k


def _linpred(coef: Mapping[str, float], state: _State, t: int, spec: DgpSpec) -> np.ndarray:
    eta = np.zeros(state.size)
    for term, b in coef.items():
        val = np.ones(state.size)
        for part in term.split("*"):
            val = val * state.value(part.strip(), t, spec)
        eta += b * val
    return eta


def _probabilities(law: Law, state: _State, t: int, spec: DgpSpec, what: str) -> np.ndarray:
    """Per-level probabilities, shape (size, levels)."""
    if law.law == "bernoulli":
        eta = _linpred(law.coef, state, t, spec)
        p = expit(eta) if law.link == "logit" else eta
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise DgpError(f"improper probability for {what} at time {t}")
        p = np.clip(p, 0.0, 1.0)
        return np.column_stack([1 - p, p])
    etas = [np.zeros(state.size)] + [_linpred(c, state, t, spec) for c in law.category_coefs]
    E = np.column_stack(etas)
    E = E - E.max(axis=1, keepdims=True)
    P = np.exp(E)
    return P / P.sum(axis=1, keepdims=True)


def _levels(law: Law) -> np.ndarray:
    return np.array([0.0, 1.0]) if law.law == "bernoulli" else np.asarray(law.levels)


def _draw(law: Law, state: _State, t: int, spec: DgpSpec, u: np.ndarray, what: str):
    if law.law == "normal":
        return _linpred(law.coef, state, t, spec) + law.sd * ndtri(u)
    P = _probabilities(law, state, t, spec, what)
    cum = np.cumsum(P, axis=1)
    idx = (u[:, None] >= cum[:, :-1]).sum(axis=1)
    return _levels(law)[idx]


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _simulate(spec: DgpSpec, n: int, rng: np.random.Generator, policy: Policy | None,
              censor: bool, keys: np.ndarray | None = None):
    st = _State(n)
    T = spec.horizon + 1
    for name, law in spec.baseline.items():
        st.cols[name] = _draw(law, st, 0, spec, rng.random(n), name)
    A = np.full((n, T), np.nan)
    C = np.ones((n, T))
    covs = {c: np.full((n, T), np.nan) for c in spec.covariates}
    Ysurv = np.zeros((n, T))
    for t in range(T):
        for name, law in spec.covariates.items():
            st.cols[f"{name}_{t}"] = covs[name][:, t] = _draw(law, st, t, spec, rng.random(n),
                                                              f"{name}_{t}")
        a = _draw(spec.exposure, st, t, spec, rng.random(n), f"A_{t}")
        if policy is not None:
            hist = HistoryFrame(t, {k: v for k, v in st.cols.items()}, "A", size=n)
            a = policy.apply(t, a, hist, keys=keys)
        st.cols[f"A_{t}"] = A[:, t] = a
        if spec.censoring is not None:
            c = _draw(spec.censoring, st, t, spec, rng.random(n), f"C_{t}")
            C[:, t] = c if censor else 1.0
        if spec.outcome_type == "survival":
            Ysurv[:, t] = _draw(spec.outcome, st, t, spec, rng.random(n), f"Y_{t}")
            st.cols[f"Y_{t}"] = Ysurv[:, t]
    if spec.outcome_type == "survival":
        Y = np.maximum.accumulate(Ysurv, axis=1)
    else:
        Y = _draw(spec.outcome, st, spec.horizon, spec, rng.random(n), "Y")
    return st, A, C, covs, Y


def sample_dgp(spec: DgpSpec, n: int, seed: int) -> PanelDataset:
    """Draw ``n`` i.i.d. trajectories (deterministic in ``seed``)."""
    if n < 1:
        raise DgpError("n must be >= 1")
    rng = np.random.default_rng(seed)
    st, A, C, covs, Y = _simulate(spec, n, rng, None, censor=True)
    T = spec.horizon + 1
    cens = C if spec.censoring is not None else None
    # mask everything after censoring and after a survival event
    gone = np.zeros((n, T), dtype=bool)
    if cens is not None:
        gone[:, 1:] |= np.cumsum(cens[:, :-1] == 0, axis=1) > 0
    event_before = np.zeros((n, T), dtype=bool)
    if spec.outcome_type == "survival":
        event_before[:, 1:] = Y[:, :-1] == 1
    A = np.where(gone | event_before, np.nan, A)
    covs = {k: np.where(gone | event_before, np.nan, v) for k, v in covs.items()}
    if cens is not None:
        cens = np.where(gone | event_before, np.nan, cens)
    if spec.outcome_type == "survival":
        unobserved = gone.copy()
        if cens is not None:
            unobserved |= (cens == 0)
        Y = np.where(event_before, 1.0, np.where(unobserved, np.nan, Y))
    elif cens is not None:
        Y = np.where(np.all(C == 1, axis=1), Y, np.nan)
    baseline = {k: st.cols[k] for k in spec.baseline}
    lo_hi = None
    if spec.outcome_type == "continuous":
        obs = Y[np.isfinite(Y)]
        lo_hi = (float(obs.min()), float(obs.max()))
    return PanelDataset(
        unit_ids=np.arange(n), horizon=spec.horizon, exposure=A, outcome=Y,
        exposure_kind=spec.exposure_kind,
        exposure_levels=tuple(spec.exposure.levels) if spec.exposure_kind != "continuous" else None,
        outcome_type=spec.outcome_type, covariates=covs, baseline=baseline, censoring=cens,
        outcome_range=lo_hi, report=ValidationReport())


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

MAX_PATHS = 4_000_000


def oracle_exact(spec: DgpSpec, policy: Policy, horizon: int | None = None) -> float:
    """Exact ``E[Y(d)]`` by enumerating every history path under the intervention.

    Censoring is disabled. For survival outcomes ``horizon`` (1..tau+1, default
    the last) selects ``P(Y_{horizon-1}(d) = 1)``.
    """
    if not spec.discrete:
        raise DgpError("oracle_exact needs discrete laws; use oracle_mc")
    T = spec.horizon + 1
    last = T - 1 if horizon is None else horizon - 1
    if spec.outcome_type == "survival" and not 0 <= last < T:
        raise DgpError(f"horizon {horizon} outside 1..{T}")
    st = _State(1)
    prob = np.ones(1)

    def branch(law: Law, name: str, t: int):
        nonlocal prob
        P = _probabilities(law, st, t, spec, name)
        k = P.shape[1]
        if st.size * k > MAX_PATHS:
            raise DgpError("too many history paths to enumerate; use oracle_mc")
        st.expand(k)
        prob = np.repeat(prob, k) * P.ravel()
        return np.tile(_levels(law), st.size // k)

    for name, law in spec.baseline.items():
        st.cols[name] = branch(law, name, 0)
    psi = 0.0
    for t in range(last + 1 if spec.outcome_type == "survival" else T):
        for name, law in spec.covariates.items():
            st.cols[f"{name}_{t}"] = branch(law, f"{name}_{t}", t)
        a = branch(spec.exposure, f"A_{t}", t)
        hist = HistoryFrame(t, dict(st.cols), "A", size=st.size)
        comps = policy.components(t, a, hist, keys=np.arange(st.size))
        if policy.rule_at(t).breakpoints() is None:
            raise DgpError("policy randomizer is continuous; use oracle_mc")
        k = len(comps)
        st.expand(k)
        prob = np.repeat(prob, k) * np.tile([p for _, p in comps], st.size // k)
        vals = np.column_stack([v for v, _ in comps]).ravel()
        st.cols[f"A_{t}"] = vals
        keep = prob > 0
        if not keep.all():
            st.cols = {c: v[keep] for c, v in st.cols.items()}
            st.size = int(keep.sum())
            prob = prob[keep]
        if spec.outcome_type == "survival":
            h = _probabilities(spec.outcome, st, t, spec, f"Y_{t}")[:, 1]
            psi += float(np.dot(prob, h))
            prob = prob * (1 - h)
            st.cols[f"Y_{t}"] = np.zeros(st.size)
    if spec.outcome_type == "survival":
        return psi
    if spec.outcome.law == "normal":
        return float(np.dot(prob, _linpred(spec.outcome.coef, st, spec.horizon, spec)))
    P = _probabilities(spec.outcome, st, spec.horizon, spec, "Y")
    return float(np.dot(prob, P @ _levels(spec.outcome)))


@dataclass(frozen=True)
class OracleMC:
    psi: float
    se: float
    m: int

    def __iter__(self):
        return iter((self.psi, self.se))


def oracle_mc(spec: DgpSpec, policy: Policy, m: int = 100_000, seed: int = 0,
              horizon: int | None = None, chunk: int = 200_000) -> OracleMC:
    """Monte Carlo ``E[Y(d)]`` from counterfactual trajectories (censoring disabled)."""
    rng = np.random.default_rng(seed)
    T = spec.horizon + 1
    last = T - 1 if horizon is None else horizon - 1
    total = 0.0
    total2 = 0.0
    done = 0
    while done < m:
        size = min(chunk, m - done)
        keys = np.arange(done, done + size, dtype=np.int64)
        _, _, _, _, Y = _simulate(spec, size, rng, policy, censor=False, keys=keys)
        y = Y[:, last] if spec.outcome_type == "survival" else Y
        total += float(y.sum())
        total2 += float((y * y).sum())
        done += size
    mean = total / m
    var = max(total2 / m - mean * mean, 0.0) * m / max(m - 1, 1)
    return OracleMC(mean, math.sqrt(var / m), m)


# ---------------------------------------------------------------------------
# Shipped DGPs
# ---------------------------------------------------------------------------

def point_treatment_dgp() -> DgpSpec:
    """``L ~ Bern(.5)``, ``A | L ~ Bern(.3 + .4L)``, ``Y | A, L ~ Bern(.2 + .3A + .2L)``."""
    return DgpSpec(
        horizon=0,
        covariates={"L": Law("bernoulli", {"1": 0.5}, link="identity")},
        exposure=Law("bernoulli", {"1": 0.3, "L": 0.4}, link="identity"),
        outcome=Law("bernoulli", {"1": 0.2, "A": 0.3, "L": 0.2}, link="identity"),
        name="point-treatment")


def two_period_dgp() -> DgpSpec:
    """Two time points, binary ``L_t`` and ``A_t``, time-varying confounding."""
    return DgpSpec(
        horizon=1,
        covariates={"L": Law("bernoulli", {"1": -0.3, "L[-1]": 1.2, "A[-1]": -1.0})},
        exposure=Law("bernoulli", {"1": -0.8, "L": 1.6, "A[-1]": 0.6}),
        outcome=Law("bernoulli", {"1": -1.2, "A": 0.9, "L": 1.6, "A[-1]": 0.5, "L[-1]": 0.8}),
        name="two-period")


def survival_dgp(horizon: int = 13) -> DgpSpec:
    """Daily survival process with censoring, loosely shaped like an ICU cohort."""
    return DgpSpec(
        horizon=horizon,
        baseline={"W": Law("bernoulli", {"1": -0.4})},
        covariates={"L": Law("bernoulli", {"1": -1.6, "W": 0.6, "L[-1]": 2.0,
                                           "A[-1]": -0.8})},
        exposure=Law("bernoulli", {"1": -2.6, "L": 1.4, "W": 0.4, "A[-1]": 3.2}),
        censoring=Law("bernoulli", {"1": 3.6, "L": -0.6}),
        outcome=Law("bernoulli", {"1": -4.2, "L": 1.3, "W": 0.5, "A": -0.6}),
        outcome_type="survival", name="survival")


def continuous_shift_dgp(beta: float = 1.5) -> DgpSpec:
    """Normal exposure, linear outcome: ``Y = 1 + beta A + L + noise``."""
    return DgpSpec(
        horizon=0,
        covariates={"L": Law("normal", {"1": 0.0}, sd=1.0)},
        exposure=Law("normal", {"1": 1.0, "L": 0.5}, sd=1.0),
        outcome=Law("normal", {"1": 1.0, "A": beta, "L": 1.0}, sd=1.0),
        outcome_type="continuous", exposure_kind="continuous", name="continuous-shift")


SHIPPED_DGPS = {"point-treatment": point_treatment_dgp, "two-period": two_period_dgp,
                "survival": survival_dgp, "continuous-shift": continuous_shift_dgp}


# ---------------------------------------------------------------------------
# Scenario harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """Which nuisances are broken, at which times, by omitting ``omit`` from features.

    ``outcome_wrong`` / ``ratio_wrong`` are time indices or ``"all"``. Omitting a
    time-varying variable removes all of its time-indexed columns.
    """

    name: str
    outcome_wrong: tuple[int, ...] | str = ()
    ratio_wrong: tuple[int, ...] | str = ()
    omit: tuple[str, ...] = ("L",)

    def broken(self, which: str, t: int) -> bool:
        times = self.outcome_wrong if which == "outcome" else self.ratio_wrong
        return times == "all" or t in tuple(times)

    @classmethod
    def from_mapping(cls, m: Mapping) -> Scenario:
        unknown = set(m) - set(cls.__dataclass_fields__)
        if unknown:
            raise DgpError(f"unknown scenario keys: {sorted(unknown)}")
        m = dict(m)
        for key in ("outcome_wrong", "ratio_wrong", "omit"):
            if key in m and not isinstance(m[key], str):
                m[key] = tuple(m[key])
        return cls(**m)


@dataclass(frozen=True)
class ScenarioResult:
    scenario: str
    estimator: str
    truth: float
    bias: float
    mc_sd: float
    mean_se: float
    coverage: float
    replicates: int
    estimates: tuple[float, ...] = ()

    @property
    def mc_se(self) -> float:
        """Monte Carlo standard error of the mean estimate."""
        return self.mc_sd / math.sqrt(self.replicates) if self.replicates > 1 else math.nan

    def row(self) -> dict:
        return {"scenario": self.scenario, "estimator": self.estimator, "truth": self.truth,
                "bias": self.bias, "mc_sd": self.mc_sd, "mc_se": self.mc_se,
                "mean_se": self.mean_se, "coverage": self.coverage,
                "replicates": self.replicates}


def _omitted_columns(scenario: Scenario, spec: DgpSpec) -> tuple[str, ...]:
    """Every time-indexed copy of each omitted variable (baseline names as is)."""
    return tuple(name if name in spec.baseline else f"{name}_*" for name in scenario.omit)


def _learners_for(scenario: Scenario, which: str, base: LearnerSpec, spec: DgpSpec):
    out = {}
    for t in range(spec.horizon + 1):
        drop = _omitted_columns(scenario, spec) if scenario.broken(which, t) else ()
        out[t] = [replace(base, drop=tuple(base.drop) + tuple(drop))]
    return out


def _one_replicate(args):
    from .density_ratio import estimate_ratios
    from .estimators import estimate
    (spec, policy, scenario, n, seed, estimators, out_base, ratio_base, folds, alpha,
     truncation) = args
    data = sample_dgp(spec, n, seed)
    out_l = _learners_for(scenario, "outcome", out_base, spec)
    rat_l = _learners_for(scenario, "ratio", ratio_base, spec)
    ratios = None
    if any(e != "gcomp" for e in estimators):
        from .estimators import _resolve_folds
        fa = _resolve_folds(folds, data, seed)
        ratios = estimate_ratios(data, policy, rat_l, fa, ratio_base and [ratio_base],
                                 truncation, seed)
    res = []
    for name in estimators:
        try:
            est = estimate(name, data, policy, out_l, folds, ratios, alpha=alpha, seed=seed)
            res.append((est.psi, est.se, est.ci[0], est.ci[1]))
        except EstimationError:
            res.append((math.nan, math.nan, math.nan, math.nan))
    return res


def run_scenario_matrix(spec: DgpSpec, policy: Policy, scenarios: Sequence[Scenario], n: int,
                        replicates: int, estimators: Sequence[str] = ("gcomp", "ipw", "tmle",
                                                                       "sdr"),
                        seed: int = 0, outcome_learner: LearnerSpec | None = None,
                        ratio_learner: LearnerSpec | None = None, folds=None,
                        alpha: float = 0.05, truth: float | None = None,
                        truncation: float | None = None, workers: int = 1,
                        oracle_m: int = 1_000_000) -> list[ScenarioResult]:
    """Bias, Monte Carlo sd, mean SE and coverage per scenario and estimator."""
    if replicates < 1:
        raise DgpError("need at least one replicate")
    for sc in scenarios:
        for name in sc.omit:
            if name not in spec.variables:
                raise DgpError(f"scenario {sc.name!r} omits unknown column {name!r}")
    if truth is None:
        truth = (oracle_exact(spec, policy) if spec.discrete
                 else oracle_mc(spec, policy, oracle_m, seed).psi)
    out_base = outcome_learner or LearnerSpec("glm", saturated=spec.discrete)
    ratio_base = ratio_learner or out_base
    results = []
    for si, sc in enumerate(scenarios):
        jobs = [(spec, policy, sc, n, seed + 1_000_003 * si + r, tuple(estimators), out_base,
                 ratio_base, folds, alpha, truncation) for r in range(replicates)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_one_replicate, jobs, chunksize=max(1, replicates // 50)))
        else:
            rows = [_one_replicate(j) for j in jobs]
        arr = np.asarray(rows, dtype=float)  # (replicates, estimators, 4)
        for j, name in enumerate(estimators):
            psi, se, lo, hi = arr[:, j, 0], arr[:, j, 1], arr[:, j, 2], arr[:, j, 3]
            ok = np.isfinite(psi)
            m = int(ok.sum())
            has_se = np.isfinite(se[ok]).any()
            cover = float(np.mean((lo[ok] <= truth) & (truth <= hi[ok]))) if has_se else math.nan
            results.append(ScenarioResult(
                scenario=sc.name, estimator=name, truth=float(truth),
                bias=float(np.mean(psi[ok]) - truth) if m else math.nan,
                mc_sd=float(np.std(psi[ok], ddof=1)) if m > 1 else 0.0,
                mean_se=float(np.mean(se[ok])) if has_se else math.nan,
                coverage=cover, replicates=replicates, estimates=tuple(psi.tolist())))
    return results


def results_table(results: Sequence[ScenarioResult]) -> pd.DataFrame:
    return pd.DataFrame([r.row() for r in results])
