from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmtp_engine import _design
from lmtp_engine.density_ratio import (
    build_ratio_frame,
    cumulate_ratios,
    estimate_ratios,
    fit_ratio,
    positivity_report,
    truncate_ratios,
)
from lmtp_engine.errors import EstimationError, PositivityError
from lmtp_engine.learners import LearnerSpec, make_folds
from lmtp_engine.panel import PanelDataset
from lmtp_engine.policy import identity_policy, parse_policy_spec, static_policy
from lmtp_engine.simulation import Law, DgpSpec, sample_dgp, two_period_dgp

SAT = LearnerSpec("glm", saturated=True)
INTERCEPT = LearnerSpec("glm", features=())


def _tiny():
    return PanelDataset(unit_ids=np.arange(4), horizon=0, exposure=np.array([[1], [0], [1], [0.]]),
                        outcome=np.array([1, 0, 1, 1.]), covariates={"L": np.zeros((4, 1))})


def test_frame_static_one():
    f = build_ratio_frame(_tiny(), static_policy(1), 0)
    assert f.X.shape[0] == 8 and f.n_pairs == 4
    a = f.X[:, f.columns.index("A_0")]
    assert np.all(a[f.label == 1] == 1)
    np.testing.assert_array_equal(a[f.label == 0], [1, 0, 1, 0])
    # paired rows identical except the exposure
    other = [i for i, c in enumerate(f.columns) if c != "A_0"]
    np.testing.assert_array_equal(f.X[f.label == 0][:, other], f.X[f.label == 1][:, other])


def test_frame_identity():
    f = build_ratio_frame(_tiny(), identity_policy(), 0)
    np.testing.assert_array_equal(f.X[f.label == 0], f.X[f.label == 1])


def test_frame_delay_uses_counterfactual_history():
    d = PanelDataset(unit_ids=np.arange(2), horizon=1, exposure=np.array([[1, 1], [0, 1.]]),
                     outcome=np.zeros(2), covariates={"L": np.zeros((2, 2))})
    pol = parse_policy_spec("delay: trigger 1 fallback 0")
    obs = build_ratio_frame(d, pol, 1, counterfactual_history=False)
    cf = build_ratio_frame(d, pol, 1, counterfactual_history=True)
    j = obs.columns.index("A_1")
    # unit 0 was treated at t=0; under the policy A_0 became 0, so A_1 is delayed again
    assert obs.X[obs.label == 1][0, j] == 1
    assert cf.X[cf.label == 1][0, j] == 0


def test_policy_kind_mismatch():
    pol = parse_policy_spec("shift: add 1", exposure_kind="continuous")
    with pytest.raises(EstimationError):
        build_ratio_frame(_tiny(), pol, 0)


def test_identity_ratio_is_one():
    d = sample_dgp(two_period_dgp(), 10_000, 1)
    est = estimate_ratios(d, identity_policy(), INTERCEPT, make_folds(d.n_units, 5, 1))
    np.testing.assert_allclose(est.ratios, 1.0, atol=0.02)
    assert abs(np.mean(np.log(est.ratios))) <= 0.05


def test_unconditional_static_ratio():
    spec = DgpSpec(horizon=0, covariates={"L": Law("bernoulli", {"1": 0.5}, link="identity")},
                   exposure=Law("bernoulli", {"1": 0.5}, link="identity"),
                   outcome=Law("bernoulli", {"1": 0.5}, link="identity"))
    d = sample_dgp(spec, 50_000, 2)
    r = estimate_ratios(d, static_policy(1), SAT, make_folds(d.n_units, 5, 2)).ratios[:, 0]
    a = d.exposure[:, 0]
    assert np.max(np.abs(r[a == 1] - 2)) < 0.05
    assert np.max(np.abs(r[a == 0])) < 0.05


def test_degenerate_classifier():
    f = build_ratio_frame(_tiny(), static_policy(1), 0)
    bad = type(f)(f.t, f.columns, f.X, np.zeros_like(f.label), f.units, f.exposure_column)
    with pytest.raises(EstimationError):
        fit_ratio(bad)


def test_cumulate_examples():
    assert cumulate_ratios([np.array([1.5]), np.array([2.0])]).weights[0, 1] == pytest.approx(3.0)
    est = cumulate_ratios(np.ones((1, 2)), censoring_prob=np.full((1, 2), 0.8),
                          censoring=np.ones((1, 2)))
    assert est.weights[0, 1] == pytest.approx(1.5625)
    with pytest.raises(PositivityError, match="unit index 0 at time 1"):
        cumulate_ratios(np.ones((1, 2)), censoring_prob=np.array([[0.8, 0.0]]),
                        censoring=np.ones((1, 2)))


def test_censored_units_carry_zero_weight():
    est = cumulate_ratios(np.ones((2, 2)), censoring_prob=np.full((2, 2), 0.5),
                          censoring=np.array([[0, np.nan], [1, 1]]),
                          at_risk=np.array([[True, False], [True, True]]))
    np.testing.assert_allclose(est.weights, [[0, 0], [2, 4]])


def test_truncation_examples():
    est = cumulate_ratios(np.array([[1.0], [1.0], [1.0], [100.0]]))
    cut = truncate_ratios(est, 0.75)
    np.testing.assert_array_equal(cut.ratios[:, 0], [1, 1, 1, 1])
    assert cut.caps == (1.0,) and cut.provenance["truncation"] == 0.75
    same = truncate_ratios(est, 1.0)
    np.testing.assert_array_equal(same.weights, est.weights)
    with pytest.raises(EstimationError):
        truncate_ratios(est, 0.4)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.floats(0, 1e3), min_size=3, max_size=3), min_size=2, max_size=15),
       st.floats(0.51, 1.0))
def test_truncation_never_increases_weights(rows, q):
    est = cumulate_ratios(np.array(rows))
    cut = truncate_ratios(est, q)
    assert np.all(cut.weights <= est.weights * (1 + 1e-12) + 1e-300)
    np.testing.assert_allclose(cut.weights[:, 1], cut.weights[:, 0] * cut.ratios[:, 1],
                               rtol=1e-12)


def test_positivity_report():
    ones = positivity_report(cumulate_ratios(np.ones((50, 2))))
    assert (ones.table["max"] == 1).all() and (ones.table["mean"] == 1).all()
    assert (ones.table["alerts"] == 0).all()
    r = np.ones((1000, 1))
    r[3] = 500
    rep = positivity_report(cumulate_ratios(r), threshold=50)
    assert rep.table["alerts"].tolist() == [1]
    assert rep.histograms["count"].sum() == 1000
    cut = truncate_ratios(cumulate_ratios(r), 0.99)
    assert positivity_report(cut).table["max"].iloc[0] <= cut.caps[0]


def test_weights_average_to_one():
    d = sample_dgp(two_period_dgp(), 50_000, 3)
    est = estimate_ratios(d, static_policy(1), SAT, make_folds(d.n_units, 5, 3))
    assert abs(est.weights[:, -1].mean() - 1) < 0.05


def test_crossfit_never_predicts_with_own_fold(monkeypatch):
    d = sample_dgp(two_period_dgp(), 300, 4)
    # mark each row with its unit so training / prediction rows can be traced
    d = PanelDataset(unit_ids=d.unit_ids, horizon=d.horizon, exposure=d.exposure,
                     outcome=d.outcome, covariates=d.covariates,
                     baseline={"uid": np.arange(300.0)})
    folds = make_folds(300, 5, 4)
    log = []
    real = _design.fit_stack

    def spy(specs, X, y, w=None, **kw):
        model = real(specs, X, y, w, **kw)
        trained = set(X[:, 0].astype(int))

        class Wrapped:
            def predict(self, Xp, names=None):
                log.append((trained, set(Xp[:, 0].astype(int))))
                return model.predict(Xp, names)
        return Wrapped()

    monkeypatch.setattr(_design, "fit_stack", spy)
    estimate_ratios(d, static_policy(1), LearnerSpec("glm"), folds)
    assert log
    for trained, predicted in log:
        assert not trained & predicted
