from __future__ import annotations

import json

import numpy as np
import pandas as pd
import pytest

from lmtp_engine.cli import load_config, main
from lmtp_engine.errors import ConfigError


def _cfg(tmp_path, body, name="run.toml"):
    p = tmp_path / name
    p.write_text(body)
    return str(p)


POINT = """
seed = 3
output = "out"
folds = 1
estimators = ["gcomp", "ipw", "tmle", "sdr"]
[data]
dgp = "point-treatment"
n = 2000
[policy]
spec = "{spec}"
[learners]
outcome = [{{ family = "glm", saturated = true }}]
"""


def _run(*argv):
    return main([*argv, "--threads", "1"])


def test_estimate_identity_matches_sample_mean(tmp_path):
    cfg = _cfg(tmp_path, POINT.format(spec="identity"))
    assert _run("estimate", "--config", cfg) == 0
    est = pd.read_csv(tmp_path / "out" / "estimates.csv")
    from lmtp_engine.simulation import point_treatment_dgp, sample_dgp
    ybar = sample_dgp(point_treatment_dgp(), 2000, 3).outcome.mean()
    gcomp = est.loc[est["estimator"] == "gcomp", "estimate"].iloc[0]
    assert gcomp == pytest.approx(ybar, abs=1e-9)
    for name in ("ipw", "tmle", "sdr"):
        assert est.loc[est["estimator"] == name, "estimate"].iloc[0] == pytest.approx(ybar,
                                                                                     abs=0.01)
    meta = json.loads((tmp_path / "out" / "metadata.json").read_text())
    assert meta["config_sha256"] == load_config(cfg).digest
    for f in ("positivity.csv", "positivity_histogram.csv", "provenance.json"):
        assert (tmp_path / "out" / f).exists()


def test_contrast_rows_and_byte_identical_rerun(tmp_path):
    body = POINT.format(spec="static: 1") + '\n'
    body = body.replace('spec = "static: 1"', 'spec = "static: 1"\ncontrast = "static: 0"')
    cfg = _cfg(tmp_path, body)
    assert _run("estimate", "--config", cfg) == 0
    first = {f: (tmp_path / "out" / f).read_bytes()
             for f in ("estimates.csv", "positivity.csv", "positivity_histogram.csv")}
    est = pd.read_csv(tmp_path / "out" / "estimates.csv")
    # g-computation and IPW carry no influence function, so only TMLE and SDR contrast
    vs = est[est["policy"].str.contains(" vs ")]
    assert sorted(vs["estimator"]) == ["sdr:difference", "tmle:difference"]
    assert _run("estimate", "--config", cfg) == 0
    for f, b in first.items():
        assert (tmp_path / "out" / f).read_bytes() == b
    assert b"\r\n" not in first["estimates.csv"]


@pytest.mark.parametrize("body, fragment", [
    ('output = "x"\n[data]\ndgp = "point-treatment"\nn = 10\n[policy]\nspec = "static: 1"\n',
     "seed"),
    ('seed = 1\ncolour = "red"\n', "colour"),
    ('seed = 1\n[data]\ndgp = "nowhere"\nn = 10\n[policy]\nspec = "static: 1"\n', "nowhere"),
    ('seed = 1\n[data]\ndgp = "point-treatment"\nn = 10\n[policy]\nspec = "teleport: 3"\n',
     "teleport"),
    ("seed = [\n", ""),
])
def test_config_errors_exit_2(tmp_path, capsys, body, fragment):
    code = _run("estimate", "--config", _cfg(tmp_path, body))
    assert code == 2
    err = capsys.readouterr().err
    assert "config error" in err and fragment in err


def test_missing_seed_raises():
    with pytest.raises(ConfigError, match="seed"):
        import tempfile, pathlib
        with tempfile.TemporaryDirectory() as d:
            p = pathlib.Path(d) / "c.toml"
            p.write_text("[policy]\nspec = 'static: 1'\n")
            load_config(p)


def test_threshold_on_continuous_refused(tmp_path, capsys):
    body = """
seed = 1
output = "out"
[data]
dgp = "continuous-shift"
n = 500
[policy]
spec = "threshold: 2 cap-above"
"""
    assert _run("estimate", "--config", _cfg(tmp_path, body)) == 3
    err = capsys.readouterr().err
    assert "refused" in err and "piecewise smooth invertible" in err
    assert not (tmp_path / "out" / "estimates.csv").exists()


def test_numerical_failure_exit_4(tmp_path, capsys):
    # a linear censoring model predicts a zero probability of staying uncensored
    # for unit 0, which was in fact uncensored
    rows = []
    for i in range(40):
        c = 1 if (i % 10 >= 5 or i == 0) else 0
        rows.append(f"{i},{i % 10},{i % 2},{c},{(i // 3) % 2 if c else ''}")
    (tmp_path / "d.csv").write_text("id,L_0,A_0,C_0,Y\n" + "\n".join(rows) + "\n")
    body = """
seed = 1
output = "out"
folds = 1
estimators = ["ipw"]
[data]
path = "d.csv"
[data.schema]
unit = "id"
exposure = "A"
outcome = "Y"
covariates = ["L"]
censoring = "C"
[policy]
spec = "static: 1"
[learners]
censoring = [{ family = "gaussian-glm", features = ["L"] }]
"""
    assert _run("estimate", "--config", _cfg(tmp_path, body)) == 4
    err = capsys.readouterr().err
    assert "numerical failure" in err and "unit index 0 at time 0" in err


def test_simulate_single_replicate(tmp_path):
    body = """
seed = 5
output = "sim"
folds = 1
estimators = ["gcomp", "tmle"]
[policy]
spec = "static: 1"
[simulation]
dgp = "point-treatment"
n = 300
replicates = 1
[[simulation.scenarios]]
name = "ok"
"""
    assert _run("simulate", "--config", _cfg(tmp_path, body)) == 0
    res = pd.read_csv(tmp_path / "sim" / "scenario_results.csv")
    assert res["truth"].iloc[0] == pytest.approx(0.6)
    assert set(res.loc[res["estimator"] == "tmle", "coverage"]) <= {0.0, 1.0}
    assert len(pd.read_csv(tmp_path / "sim" / "replicates.csv")) == 2


SURV = """
seed = 2
output = "surv"
folds = 1
[data]
dgp = "survival"
n = 1500
[policy]
spec = "delay: trigger 1 fallback 0"
name = "delay"
[learners]
outcome = [{ family = "glm", saturated = true, features = ["W", "L", "A"] }]
censoring = [{ family = "glm", features = ["L"] }]
[survival]
estimator = "tmle"
band_replicates = 200
"""


def test_survival_command(tmp_path):
    assert _run("survival", "--config", _cfg(tmp_path, SURV)) == 0
    cur = pd.read_csv(tmp_path / "surv" / "curves.csv")
    assert len(cur) == 14
    assert np.all(np.diff(cur["estimate"]) >= 0)
    assert np.all(cur["band_high"] - cur["band_low"] >= cur["ci_high"] - cur["ci_low"] - 1e-12)


def test_survival_needs_censoring(tmp_path, capsys):
    body = """
seed = 2
[data]
n = 100
[data.dgp]
horizon = 2
outcome_type = "survival"
covariates = { L = { coef = { "1" = 0.0 } } }
exposure = { coef = { "1" = 0.0 } }
outcome = { coef = { "1" = -2.0 } }
[policy]
spec = "static: 1"
"""
    code = _run("survival", "--config", _cfg(tmp_path, body), "--output", str(tmp_path / "o"))
    assert code == 2
    assert "censoring" in capsys.readouterr().err
