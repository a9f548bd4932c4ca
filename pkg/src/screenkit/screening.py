"""Approval decisions, lender profit, break-even thresholds, counterfactual
information structures, and misallocation accounting.

The efficiency benchmark is ex-ante full information: an applicant deserves
approval when their true type clears the threshold. Type I errors are
inefficient rejections (share of rejected applicants with type above the
threshold); Type II errors are inefficient approvals (share of approved
applicants with type below it).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ArgumentError, CalibrationError, ParameterError
from .model import GroupModel, Population, ScoreMap, sample_population
from .smm import marginal_default_rate

SCENARIOS = ("baseline", "remove-other-signal", "equalize-score-precision")


@dataclass(frozen=True)
class ProfitParams:
    """Per-loan profit components: alpha + beta_r - gamma*delta(theta) - c.

    Only the composite margin alpha + beta_r - c and the loss exposure gamma
    enter any decision, so calibration fixes gamma and solves for the margin.
    """

    alpha: float
    beta_r: float
    gamma: float
    c: float

    def __post_init__(self):
        for v in (self.alpha, self.beta_r, self.gamma, self.c):
            if not math.isfinite(v):
                raise ParameterError("profit parameters must be finite")
        if not 0.0 < self.gamma < 1.0:
            raise ParameterError(f"gamma must lie in (0,1), got {self.gamma}")
        if self.c < 0:
            raise ParameterError("per-loan cost c must be non-negative")

    @property
    def margin(self) -> float:
        return self.alpha + self.beta_r - self.c


@dataclass(frozen=True)
class Decision:
    approved: np.ndarray  # bool per applicant

    @property
    def approval_rate(self) -> float:
        return float(self.approved.mean())


@dataclass(frozen=True)
class CfSpec:
    scenario: str
    reference: Optional[str] = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ArgumentError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.scenario == "equalize-score-precision" and not self.reference:
            raise ArgumentError("equalize-score-precision needs a reference group")


@dataclass(frozen=True)
class CfReport:
    scenario: str
    group: str
    approval_rate: float
    type1_rate: float
    type2_rate: float
    threshold_used: float

    def __post_init__(self):
        for name in ("approval_rate", "type1_rate", "type2_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must lie in [0,1], got {v}")


def approve(pop: Population, threshold: float) -> Decision:
    """Approve exactly the applicants whose posterior clears the threshold (ties approve)."""
    return Decision(approved=pop.posterior >= threshold)


def expected_profit(pop: Population, profit: ProfitParams, threshold: float) -> float:
    """Mean of (margin - gamma*default prob) over approved, times the approval rate."""
    appr = pop.posterior >= threshold
    if not appr.any():
        return 0.0
    per_loan = profit.margin - profit.gamma * pop.default_probs()
    return float(np.mean(np.where(appr, per_loan, 0.0)))


def calibrate_zero_profit(pop: Population, threshold: float, gamma: float) -> ProfitParams:
    """Fix gamma and set the margin so total expected profit is zero:
    margin = gamma * E[default prob | approved]."""
    if not 0.0 < gamma < 1.0:
        raise ParameterError(f"gamma must lie in (0,1), got {gamma}")
    appr = pop.posterior >= threshold
    if not appr.any():
        raise CalibrationError("empty approval set; cannot calibrate")
    margin = gamma * float(pop.default_probs()[appr].mean())
    return ProfitParams(alpha=margin, beta_r=0.0, gamma=gamma, c=0.0)


def break_even_threshold(
    pop_under_info: Population,
    profit: ProfitParams,
    xtol: float = 1e-8,
) -> float:
    """Threshold where the marginal approved applicant earns zero expected
    profit: gamma * E[default prob | posterior = threshold] = margin.

    The conditional default rate is monotone decreasing in the threshold, so
    the root is unique. Searches [mu0 - 8*sd_theta, mu0 + 8*sd_theta] by
    bisection; if the margin covers even the riskiest marginal pool the
    sentinel -inf is returned (approve everyone), and if no threshold breaks
    even the upper bracket edge is returned with a warning.
    """
    model = pop_under_info.model
    m = profit.margin
    sd = math.sqrt(model.risk.var_theta)
    lo = model.risk.mu0 - 8.0 * sd
    hi = model.risk.mu0 + 8.0 * sd

    def excess(x):  # marginal loss at threshold x; decreasing in x
        return profit.gamma * marginal_default_rate(model.risk, model.signals, x) - m

    if excess(lo) <= 0.0:
        return float("-inf")
    if excess(hi) > 0.0:
        warnings.warn("no break-even threshold in bracket; returning upper edge", RuntimeWarning)
        return hi
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def error_rates(pop: Population, decision: Decision, threshold: float) -> Tuple[float, float]:
    """(type1, type2): share of rejected with theta >= threshold, and share of
    approved with theta < threshold."""
    appr = decision.approved
    if appr.shape != pop.theta.shape:
        raise ArgumentError("decision does not match population")
    n_appr = int(appr.sum())
    n_rej = appr.size - n_appr
    deserving = pop.theta >= threshold
    type1 = float(np.sum(deserving & ~appr) / n_rej) if n_rej else 0.0
    type2 = float(np.sum(~deserving & appr) / n_appr) if n_appr else 0.0
    return type1, type2


def apply_scenario(model: GroupModel, spec: CfSpec, models: Dict[str, GroupModel]) -> GroupModel:
    """Counterfactual information structure for one group."""
    if spec.scenario == "baseline":
        return model
    if spec.scenario == "remove-other-signal":
        if model.signals.k == 1:
            return model
        return replace(model, signals=model.signals.drop_second())
    ref = models.get(spec.reference)
    if ref is None:
        raise ArgumentError(f"reference group {spec.reference!r} not among models")
    return replace(model, signals=model.signals.with_score_precision(ref.signals.precisions[0]))


def run_counterfactual(
    models: Dict[str, GroupModel],
    score_map: ScoreMap,
    spec: CfSpec,
    gamma: float,
    n: int,
    seed: int,
    threads: int = 1,
) -> List[CfReport]:
    """Per group: calibrate the margin to zero marginal profit at the baseline
    threshold, apply the scenario, resample signals holding the type draws
    fixed (common random numbers), re-solve the break-even threshold, and
    report approval and misallocation rates.

    The margin is set so the baseline scenario re-solves to the estimated
    threshold itself; a no-op counterfactual is therefore bitwise identical
    to baseline.
    """
    if not 0.0 < gamma < 1.0:
        raise ParameterError(f"gamma must lie in (0,1), got {gamma}")
    reports = []
    for label in sorted(models):
        base = models[label]
        margin = gamma * marginal_default_rate(base.risk, base.signals, base.threshold)
        profit = ProfitParams(alpha=margin, beta_r=0.0, gamma=gamma, c=0.0)
        cf_model = apply_scenario(base, spec, models)
        pop = sample_population(cf_model, score_map, n, seed, threads=threads)
        threshold = break_even_threshold(pop, profit)
        decision = approve(pop, threshold)
        t1, t2 = error_rates(pop, decision, threshold)
        reports.append(CfReport(
            scenario=spec.scenario,
            group=label,
            approval_rate=decision.approval_rate,
            type1_rate=t1,
            type2_rate=t2,
            threshold_used=threshold,
        ))
    return reports
