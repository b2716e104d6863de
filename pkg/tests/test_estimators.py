from __future__ import annotations

import warnings

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmtp_engine import estimators as E
from lmtp_engine.density_ratio import cumulate_ratios
from lmtp_engine.errors import ConvergenceError, EstimationError
from lmtp_engine.estimators import (
    bootstrap_se,
    contrast,
    estimate,
    estimate_gcomp,
    estimate_ipw,
    estimate_sdr,
    estimate_tmle,
    fluctuate,
    survival_curves,
)
from lmtp_engine.learners import LearnerSpec
from lmtp_engine.panel import PanelDataset, take_units
from lmtp_engine.policy import identity_policy, parse_policy_spec, static_policy
from lmtp_engine.simulation import (
    DgpSpec,
    Law,
    oracle_exact,
    point_treatment_dgp,
    sample_dgp,
    survival_dgp,
    two_period_dgp,
)

SAT = LearnerSpec("glm", saturated=True)
INTERCEPT = LearnerSpec("glm", features=())


@pytest.fixture(scope="module")
def point_data():
    return sample_dgp(point_treatment_dgp(), 10_000, 11)


@pytest.fixture(scope="module")
def two_period_data():
    return sample_dgp(two_period_dgp(), 50_000, 12)


def test_identity_intercept_only(point_data):
    y = point_data.outcome
    pol = identity_policy()
    assert estimate_gcomp(point_data, pol, INTERCEPT).psi == pytest.approx(y.mean(), abs=1e-12)
    assert abs(estimate_tmle(point_data, pol, INTERCEPT, 5).psi - y.mean()) <= 1e-8
    tol = 0.02 * y.std()
    assert abs(estimate_ipw(point_data, pol, learners=INTERCEPT, folds=5).psi - y.mean()) <= tol
    assert abs(estimate_sdr(point_data, pol, INTERCEPT, 5).psi - y.mean()) <= tol


def test_identity_sdr_saturated(point_data):
    sdr = estimate_sdr(point_data, identity_policy(), SAT)
    assert abs(sdr.psi - point_data.outcome.mean()) <= 1e-6


def test_gcomp_matches_groupby(point_data):
    d = point_data
    df = pd.DataFrame({"L": d.covariates["L"][:, 0], "A": d.exposure[:, 0], "Y": d.outcome})
    cell = df.groupby(["L", "A"])["Y"].mean()
    pl = df["L"].value_counts(normalize=True)
    manual = sum(pl[l] * cell[(l, 1.0)] for l in pl.index)
    assert estimate_gcomp(d, static_policy(1), SAT).psi == pytest.approx(manual, abs=1e-12)


def test_ipw_with_known_propensity(point_data):
    d = point_data
    L, A, Y = d.covariates["L"][:, 0], d.exposure[:, 0], d.outcome
    pi = 0.3 + 0.4 * L
    ratios = cumulate_ratios(((A == 1) / pi)[:, None])
    direct = np.sum((A == 1) * Y / pi) / len(Y)
    assert estimate_ipw(d, static_policy(1), ratios).psi == pytest.approx(direct, rel=1e-12)


def test_five_step_gformula_walkthrough(two_period_data):
    d = two_period_data
    df = pd.DataFrame({"L0": d.covariates["L"][:, 0], "A0": d.exposure[:, 0],
                       "L1": d.covariates["L"][:, 1], "A1": d.exposure[:, 1], "Y": d.outcome})
    # 1. regress Y on (A1, H1)
    q1 = df.groupby(["L0", "A0", "L1", "A1"])["Y"].mean()
    # 2. predict with A1 set to 1
    y1 = np.array([q1[(r.L0, r.A0, r.L1, 1.0)] for r in df.itertuples()])
    # 3. regress the pseudo-outcome on (A0, H0)
    df["Y1"] = y1
    q0 = df.groupby(["L0", "A0"])["Y1"].mean()
    # 4. predict with A0 set to 1
    y0 = np.array([q0[(r.L0, 1.0)] for r in df.itertuples()])
    # 5. average
    est = estimate_gcomp(d, static_policy(1), SAT)
    np.testing.assert_allclose(est.fits.pseudo[:, 1], y1, atol=1e-12)
    np.testing.assert_allclose(est.fits.pseudo[:, 0], y0, atol=1e-12)
    assert est.psi == pytest.approx(y0.mean(), abs=1e-12)


def test_saturated_estimators_agree(two_period_data):
    pol = parse_policy_spec("mtp: if a == 1 then bernoulli(0.5) else a")
    psis = [estimate(n, two_period_data, pol, SAT).psi for n in ("gcomp", "ipw", "tmle", "sdr")]
    assert max(psis) - min(psis) <= 0.02
    truth = oracle_exact(two_period_dgp(), pol)
    assert all(abs(p - truth) <= 0.015 for p in psis)


def test_tmle_influence_mean_and_ci(two_period_data):
    est = estimate_tmle(two_period_data, static_policy(1), SAT, 5)
    lo, hi = est.scale
    assert abs(est.influence.mean()) <= 1e-8 * (hi - lo)
    z = E.z_quantile(0.975)
    assert est.ci == pytest.approx((est.psi - z * est.se, est.psi + z * est.se))
    assert E.z_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-9)


def test_determinism(point_data):
    small = take_units(point_data, np.arange(1000))
    a = estimate_sdr(small, static_policy(1), LearnerSpec("knn", k=20), 3, seed=4)
    b = estimate_sdr(small, static_policy(1), LearnerSpec("knn", k=20), 3, seed=4)
    assert a.psi == b.psi and np.array_equal(a.influence, b.influence)


def test_continuous_outcome_scaled_and_in_range():
    from lmtp_engine.simulation import continuous_shift_dgp
    d = sample_dgp(continuous_shift_dgp(), 3000, 5)
    est = estimate_tmle(d, parse_policy_spec("shift: add 0.5"), LearnerSpec("glm"), 5)
    lo, hi = d.outcome.min(), d.outcome.max()
    assert est.scale == (lo, hi)
    assert lo <= est.psi <= hi
    assert abs(est.psi - (1 + 1.5 * 1.5)) < 4 * est.se + 0.02


def test_degenerate_outcome():
    d = PanelDataset(unit_ids=np.arange(5), horizon=0, exposure=np.array([[0, 1, 0, 1, 1.]]).T,
                     outcome=np.ones(5))
    for name in ("gcomp", "ipw", "tmle", "sdr"):
        e = estimate(name, d, static_policy(1))
        assert e.psi == 1 and e.se == 0 and e.degenerate


def test_fluctuation_failure_carries_diagnostics(monkeypatch):
    monkeypatch.setattr(E, "FLUCT_MAX_ITER", 1)
    off = np.full(50, -8.0)
    y = np.full(50, 0.5)
    with pytest.raises(ConvergenceError) as exc:
        fluctuate(off, y, np.ones(50))
    assert "score" in exc.value.diagnostics


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=40), st.floats(-6, 6), st.integers(0, 99))
def test_fluctuation_solves_score(y, shift, seed):
    y = np.array(y)
    rng = np.random.default_rng(seed)
    off = rng.normal(size=len(y)) + shift
    w = rng.exponential(size=len(y))
    eps = fluctuate(off, y, w)
    mu = 1 / (1 + np.exp(-(off + eps)))
    assert abs(np.dot(w, y - mu)) / len(y) <= 1e-6


def test_contrasts(point_data):
    x = estimate_tmle(point_data, static_policy(1), SAT)
    same = contrast(x, x)
    assert same.psi == 0 and same.se == 0
    a = E.Estimate("a", 0.2, 0.01, (0, 0), influence=np.array([0.1, -0.1]))
    b = E.Estimate("b", 0.1, 0.01, (0, 0), influence=np.array([0.05, -0.05]))
    assert contrast(a, b, "ratio").psi == pytest.approx(2.0)
    with pytest.raises(EstimationError):
        contrast(a, E.Estimate("g", 0.1, np.nan, (0, 0)))
    with pytest.raises(EstimationError):
        contrast(a, E.Estimate("c", 0.1, 0.01, (0, 0), influence=np.zeros(3)))


def test_bootstrap_guards(point_data):
    with pytest.raises(EstimationError, match="bootstrap will fail"):
        bootstrap_se("gcomp", point_data, static_policy(1), [LearnerSpec("knn")], B=5)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        e = bootstrap_se("gcomp", point_data, static_policy(1), SAT, B=1)
    assert e.se == 0 and any("single bootstrap" in str(r.message) for r in rec)


@pytest.mark.slow
def test_bootstrap_se_tracks_monte_carlo_sd():
    spec, pol = point_treatment_dgp(), static_policy(1)
    outer = [sample_dgp(spec, 400, 1000 + r) for r in range(200)]
    psis = [estimate_gcomp(d, pol, SAT).psi for d in outer]
    mc_sd = np.std(psis, ddof=1)
    ses = [bootstrap_se("gcomp", d, pol, SAT, B=200, seed=r).se for r, d in enumerate(outer)]
    assert abs(np.mean(ses) / mc_sd - 1) <= 0.25


def test_survival_zero_events():
    spec = DgpSpec(horizon=3, covariates={"L": Law("bernoulli", {"1": 0.0})},
                   exposure=Law("bernoulli", {"1": 0.0}),
                   censoring=Law("bernoulli", {"1": 3.0}),
                   outcome=Law("bernoulli", {"1": 0.0}, link="identity"),
                   outcome_type="survival")
    d = sample_dgp(spec, 500, 6)
    curve = survival_curves(d, static_policy(1), "tmle", SAT, band_replicates=50)
    assert np.all(curve.psi == 0) and np.all(curve.band == 0)


def test_survival_curve_structure():
    d = sample_dgp(survival_dgp(horizon=5), 3000, 7)
    curve = survival_curves(d, parse_policy_spec("delay: trigger 1 fallback 0"), "sdr", SAT,
                            band_replicates=200)
    assert curve.horizons == tuple(range(1, 7))
    assert np.all(np.diff(curve.psi) >= 0)
    assert np.all(curve.band >= curve.pointwise - 1e-15)
    assert list(curve.table("x").columns) == ["curve", "horizon", "estimate", "se", "ci_low",
                                              "ci_high", "band_low", "band_high"]
    with pytest.raises(EstimationError):
        survival_curves(d, static_policy(1), horizons=[9])


def test_horizon_rejected_for_terminal_outcome(point_data):
    with pytest.raises(EstimationError):
        estimate_gcomp(point_data, static_policy(1), horizon=1)
