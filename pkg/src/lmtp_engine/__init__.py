"""Estimation of causal effects of longitudinal modified treatment policies.

Modules: :mod:`panel` (data), :mod:`policy` (interventions), :mod:`learners`
(nuisance regressions), :mod:`density_ratio`, :mod:`estimators`,
:mod:`simulation` (known DGPs and oracles) and :mod:`cli`.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .density_ratio import (
    RatioEstimates,
    build_ratio_frame,
    estimate_ratios,
    fit_ratio,
    positivity_report,
    truncate_ratios,
)
from .errors import *  # noqa: F401,F403
from .estimators import (
    Estimate,
    SurvivalCurve,
    bootstrap_se,
    contrast,
    curve_difference,
    estimate,
    estimate_gcomp,
    estimate_ipw,
    estimate_sdr,
    estimate_tmle,
    survival_curves,
)
from .learners import LearnerSpec, fit_learner, make_folds, stack_superlearner
from .panel import PanelDataset, Schema, history_at, load_panel, write_panel
from .policy import (
    Policy,
    draw_randomizer,
    evaluate_policy,
    identity_policy,
    parse_policy_spec,
    static_policy,
    validate_policy_requirements,
)
from .simulation import (
    SHIPPED_DGPS,
    DgpSpec,
    Law,
    Scenario,
    ScenarioResult,
    continuous_shift_dgp,
    oracle_exact,
    oracle_mc,
    point_treatment_dgp,
    run_scenario_matrix,
    sample_dgp,
    survival_dgp,
    two_period_dgp,
)
