"""Batch front door: ``lmtp-engine {estimate,simulate,survival} --config run.toml``.

A run config is a TOML file. All randomness flows from the mandatory root
``seed``; unknown keys are rejected. Reports are CSV tables plus a
``metadata.json`` holding everything that is not reproducible (timestamps,
wall time), so two runs with the same config produce byte-identical tables.

Exit codes: 0 success, 2 config error, 3 validation refusal, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import pandas as pd
import scipy
import tomli

from . import __version__
from .density_ratio import estimate_ratios, positivity_report
from .errors import (
    ConfigError,
    DgpError,
    EstimationError,
    ExposureKindError,
    LearnerError,
    LmtpError,
    ParseError,
    PolicyError,
    SchemaError,
    ValidationError,
)
from .estimators import ESTIMATORS, _resolve_folds, contrast, curve_difference, estimate, \
    survival_curves
from .learners import LearnerSpec
from .panel import PanelDataset, load_panel
from .policy import Policy, parse_policy_spec, validate_policy_requirements
from .simulation import SHIPPED_DGPS, DgpSpec, Scenario, results_table, run_scenario_matrix, \
    sample_dgp

EXIT_OK, EXIT_CONFIG, EXIT_REFUSED, EXIT_NUMERICAL = 0, 2, 3, 4

log = logging.getLogger("lmtp_engine")


class Refusal(LmtpError):
    """A precondition of the requested analysis is violated."""


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

_TOP = {"seed", "output", "alpha", "folds", "truncation", "estimators", "data", "policy",
        "learners", "simulation", "survival"}
_DATA = {"path", "dgp", "n", "schema"}
_POLICY = {"spec", "contrast", "contrast_type", "name", "contrast_name"}
_LEARNERS = {"outcome", "ratio", "censoring"}
_SIMULATION = {"dgp", "n", "replicates", "scenarios", "truth", "oracle_m"}
_SURVIVAL = {"estimator", "horizons", "band_replicates", "isotonic"}


def _check_keys(section: Mapping, allowed: set, where: str):
    if not isinstance(section, Mapping):
        raise ConfigError(f"[{where}] must be a table")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")


@dataclass(frozen=True)
class RunConfig:
    """Parsed and key-checked run configuration."""

    seed: int
    output: str | None
    alpha: float
    folds: int | None
    truncation: float | None
    estimators: tuple[str, ...]
    data: dict
    policy: dict
    learners: dict
    simulation: dict
    survival: dict
    base_dir: Path
    raw: bytes = field(repr=False, default=b"")

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.raw).hexdigest()


def load_config(path: str | Path) -> RunConfig:
    """Read and check a TOML run config (unknown keys and a missing seed are errors)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        cfg = tomli.loads(raw.decode("utf-8"))
    except (tomli.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    _check_keys(cfg, _TOP, "top level")
    if "seed" not in cfg:
        raise ConfigError("the config must set a root 'seed'")
    seed = cfg["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("'seed' must be a non-negative integer")
    for name, allowed in (("data", _DATA), ("policy", _POLICY), ("learners", _LEARNERS),
                          ("simulation", _SIMULATION), ("survival", _SURVIVAL)):
        _check_keys(cfg.get(name, {}), allowed, name)
    alpha = float(cfg.get("alpha", 0.05))
    if not 0 < alpha < 1:
        raise ConfigError("'alpha' must lie in (0, 1)")
    folds = cfg.get("folds", 5)
    if folds is not None and (not isinstance(folds, int) or folds < 1):
        raise ConfigError("'folds' must be a positive integer (1 disables cross-fitting)")
    trunc = cfg.get("truncation")
    if trunc is not None and not 0.5 < float(trunc) <= 1:
        raise ConfigError("'truncation' must lie in (0.5, 1]")
    ests = tuple(cfg.get("estimators", ("tmle", "sdr")))
    bad = [e for e in ests if e not in ESTIMATORS]
    if bad or not ests:
        raise ConfigError(f"unknown estimator(s) {bad}; choose from {sorted(ESTIMATORS)}")
    return RunConfig(seed=seed, output=cfg.get("output"), alpha=alpha,
                     folds=None if folds in (None, 1) else folds,
                     truncation=None if trunc is None else float(trunc), estimators=ests,
                     data=dict(cfg.get("data", {})), policy=dict(cfg.get("policy", {})),
                     learners=dict(cfg.get("learners", {})),
                     simulation=dict(cfg.get("simulation", {})),
                     survival=dict(cfg.get("survival", {})), base_dir=path.parent, raw=raw)


def _learner_list(value, where: str):
    try:
        if value is None:
            return None
        if isinstance(value, Mapping) and "family" not in value:
            return {k: _learner_list(v, f"{where}.{k}") for k, v in value.items()}
        items = [value] if isinstance(value, Mapping) else list(value)
        return [LearnerSpec.from_mapping(v) for v in items]
    except (LearnerError, TypeError) as exc:
        raise ConfigError(f"[learners] {where}: {exc}") from None


def _learners(cfg: RunConfig) -> tuple[Any, Any, Any]:
    out = _learner_list(cfg.learners.get("outcome"), "outcome")
    ratio = _learner_list(cfg.learners.get("ratio"), "ratio")
    cens = _learner_list(cfg.learners.get("censoring"), "censoring")
    return out, ratio if ratio is not None else out, cens


def _dgp(value) -> DgpSpec:
    if isinstance(value, str):
        if value not in SHIPPED_DGPS:
            raise ConfigError(f"unknown DGP {value!r}; shipped: {sorted(SHIPPED_DGPS)}")
        return SHIPPED_DGPS[value]()
    if isinstance(value, Mapping):
        return DgpSpec.from_mapping(value)
    raise ConfigError("'dgp' must be a shipped name or a table")


def _data(cfg: RunConfig) -> PanelDataset:
    d = cfg.data
    if ("path" in d) == ("dgp" in d):
        raise ConfigError("[data] needs exactly one of 'path' or 'dgp'")
    if "dgp" in d:
        if "schema" in d:
            raise ConfigError("[data] 'schema' only applies to files")
        n = d.get("n")
        if not isinstance(n, int) or n < 2:
            raise ConfigError("[data] synthetic data needs an integer 'n' >= 2")
        return sample_dgp(_dgp(d["dgp"]), n, cfg.seed)
    if "schema" not in d:
        raise ConfigError("[data] a file source needs a [data.schema] table")
    path = Path(d["path"])
    if not path.is_absolute():
        path = cfg.base_dir / path
    return load_panel(path, d["schema"])


def _policy(text: str | None, data_kind: str, seed: int, name: str, what: str) -> Policy:
    if not text:
        raise ConfigError(f"[policy] '{what}' is required")
    pol = parse_policy_spec(text, seed=seed, name=name or what)
    check = validate_policy_requirements(pol, data_kind)
    if not check.passed:
        raise Refusal(f"policy '{pol.name}' fails the technical requirements\n{check.message()}")
    return pol


def _policies(cfg: RunConfig, kind: str) -> list[Policy]:
    p = cfg.policy
    out = [_policy(p.get("spec"), kind, cfg.seed, p.get("name", ""), "spec")]
    if "contrast" in p:
        out.append(_policy(p["contrast"], kind, cfg.seed, p.get("contrast_name", ""),
                           "contrast"))
    return out


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _write_csv(df: pd.DataFrame, path: Path):
    df.to_csv(path, index=False, lineterminator="\n", float_format="%.12g")


def _write_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")


def _metadata(cfg: RunConfig, command: str, started: float, threads: int) -> dict:
    return {
        "command": command, "config_sha256": cfg.digest, "seed": cfg.seed,
        "started_utc": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "wall_seconds": round(time.time() - started, 3), "threads": threads,
        "versions": {"lmtp_engine": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__,
                     "pandas": pd.__version__},
    }


def _out_dir(cfg: RunConfig, override: str | None) -> Path:
    out = Path(override or cfg.output or "lmtp-report")
    if not out.is_absolute() and override is None and cfg.output:
        out = cfg.base_dir / out
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_estimate(cfg: RunConfig, out: Path, threads: int) -> None:
    data = _data(cfg)
    policies = _policies(cfg, data.exposure_kind)
    out_l, ratio_l, cens_l = _learners(cfg)
    folds = _resolve_folds(cfg.folds, data, cfg.seed)
    rows, positivity, hists, prov = [], [], [], {}
    results: dict[str, list] = {e: [] for e in cfg.estimators}
    for pol in policies:
        ratios = None
        if any(e != "gcomp" for e in cfg.estimators):
            ratios = estimate_ratios(data, pol, ratio_l, folds, cens_l, cfg.truncation,
                                     cfg.seed)
            rep = positivity_report(ratios)
            positivity.append(rep.table.assign(policy=pol.name))
            hists.append(rep.histograms.assign(policy=pol.name))
        for name in cfg.estimators:
            log.info("estimating %s under %s", name, pol.name)
            est = estimate(name, data, pol, out_l, folds, ratios, alpha=cfg.alpha,
                           seed=cfg.seed, **({"ratio_learners": ratio_l,
                                              "censoring_learners": cens_l}
                                             if name in ("tmle", "sdr") else {}))
            results[name].append(est)
            rows.append(est.row(policy=pol.name))
            prov[f"{pol.name}/{name}"] = est.provenance
    if len(policies) == 2:
        ctype = cfg.policy.get("contrast_type", "difference")
        for name, (a, b) in results.items():
            if a.influence is None or b.influence is None:
                continue
            c = contrast(a, b, ctype)
            rows.append(c.row(policy=f"{policies[0].name} vs {policies[1].name}"))
    _write_csv(pd.DataFrame(rows), out / "estimates.csv")
    if positivity:
        _write_csv(pd.concat(positivity, ignore_index=True), out / "positivity.csv")
        _write_csv(pd.concat(hists, ignore_index=True), out / "positivity_histogram.csv")
    _write_json({"policies": [str(p) for p in policies], "provenance": prov},
                out / "provenance.json")


def cmd_simulate(cfg: RunConfig, out: Path, threads: int) -> None:
    s = cfg.simulation
    if "dgp" not in s:
        raise ConfigError("[simulation] needs a 'dgp'")
    spec = _dgp(s["dgp"])
    pol = _policy(cfg.policy.get("spec"), spec.exposure_kind, cfg.seed,
                  cfg.policy.get("name", ""), "spec")
    try:
        scenarios = [Scenario.from_mapping(m) for m in s.get("scenarios", [{"name": "ok"}])]
    except TypeError as exc:
        raise ConfigError(f"[simulation] scenarios: {exc}") from None
    out_l, ratio_l, _ = _learners(cfg)
    for what, value in (("outcome", out_l), ("ratio", ratio_l)):
        if value is not None and (not isinstance(value, list) or len(value) != 1):
            raise ConfigError(f"[learners] {what}: the scenario harness takes a single learner")
    n, reps = s.get("n", 2000), s.get("replicates", 100)
    if not isinstance(n, int) or not isinstance(reps, int):
        raise ConfigError("[simulation] 'n' and 'replicates' must be integers")
    results = run_scenario_matrix(
        spec, pol, scenarios, n, reps, cfg.estimators, cfg.seed,
        outcome_learner=out_l[0] if out_l else None,
        ratio_learner=ratio_l[0] if ratio_l else None, folds=cfg.folds, alpha=cfg.alpha,
        truth=s.get("truth"), truncation=cfg.truncation, workers=threads,
        oracle_m=s.get("oracle_m", 1_000_000))
    _write_csv(results_table(results), out / "scenario_results.csv")
    per_rep = pd.DataFrame([{"scenario": r.scenario, "estimator": r.estimator,
                             "replicate": i, "estimate": v}
                            for r in results for i, v in enumerate(r.estimates)])
    _write_csv(per_rep, out / "replicates.csv")


def cmd_survival(cfg: RunConfig, out: Path, threads: int) -> None:
    data = _data(cfg)
    if not data.is_survival:
        raise ConfigError("the survival command needs a survival outcome "
                          "(outcome_type = \"survival\")")
    if data.censoring is None:
        raise ConfigError("the survival command needs a censoring column")
    policies = _policies(cfg, data.exposure_kind)
    out_l, ratio_l, cens_l = _learners(cfg)
    s = cfg.survival
    est = s.get("estimator", "tmle")
    if est not in ESTIMATORS:
        raise ConfigError(f"[survival] unknown estimator {est!r}")
    B = int(s.get("band_replicates", 1000))
    folds = _resolve_folds(cfg.folds, data, cfg.seed)
    curves = [survival_curves(data, p, est, out_l, folds, s.get("horizons"),
                              band_replicates=B, alpha=cfg.alpha, seed=cfg.seed,
                              truncation=cfg.truncation, ratio_learners=ratio_l,
                              censoring_learners=cens_l, isotonic=s.get("isotonic", True))
              for p in policies]
    tables = [c.table(p.name) for c, p in zip(curves, policies)]
    if len(curves) == 2:
        diff = curve_difference(curves[0], curves[1], B, cfg.seed)
        tables.append(diff.table(f"{policies[0].name} - {policies[1].name}"))
    _write_csv(pd.concat(tables, ignore_index=True), out / "curves.csv")
    _write_json({"policies": [str(p) for p in policies],
                 "critical_values": [c.critical_value for c in curves]},
                out / "provenance.json")


COMMANDS = {"estimate": cmd_estimate, "simulate": cmd_simulate, "survival": cmd_survival}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, SchemaError, ParseError, DgpError, PolicyError)):
        return EXIT_CONFIG
    if isinstance(exc, (Refusal, ValidationError, ExposureKindError)):
        return EXIT_REFUSED
    if isinstance(exc, (EstimationError, LearnerError, FloatingPointError)):
        return EXIT_NUMERICAL
    return EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmtp-engine",
                                     description="Longitudinal modified treatment policies")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("estimate", "estimate policy effects on a dataset"),
                           ("simulate", "run a scenario matrix on a known DGP"),
                           ("survival", "incidence curves with simultaneous bands")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="TOML run config")
        p.add_argument("--threads", type=int, default=None,
                       help="worker processes (default: available cores)")
        p.add_argument("--output", default=None, help="report directory")
        p.add_argument("--verbose", "-v", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    started = time.time()
    threads = args.threads or os.cpu_count() or 1
    try:
        cfg = load_config(args.config)
        out = _out_dir(cfg, args.output)
        COMMANDS[args.command](cfg, out, threads)
    except LmtpError as exc:
        code = _exit_code(exc)
        label = {EXIT_CONFIG: "config error", EXIT_REFUSED: "refused",
                 EXIT_NUMERICAL: "numerical failure"}[code]
        print(f"lmtp-engine: {label}: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostics", None)
        if diag:
            print(f"diagnostics: {json.dumps(diag, default=str)}", file=sys.stderr)
        return code
    _write_json(_metadata(cfg, args.command, started, threads), out / "metadata.json")
    log.info("report written to %s", out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
