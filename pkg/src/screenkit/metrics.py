"""Score-informativeness metrics: ROC/AUC, binned log-odds fit, forward and
reverse default-score regressions, confusion matrices, reject-inference
reconstruction, and the between/residual AUC decomposition.

The "good" outcome throughout is non-default: the true positive rate is the
fraction of non-defaulters admitted at a given cutoff, and AUC is the
probability a random non-defaulter outscores a random defaulter, ties at
half credit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import ArgumentError, InsufficientDataError, UndefinedMetricError, ValidationError


def _as_score_outcome(scores, bad):
    s = np.asarray(scores, dtype=float)
    b = np.asarray(bad)
    if s.shape != b.shape or s.ndim != 1:
        raise ArgumentError("scores and outcomes must be equal-length 1-d arrays")
    if s.size == 0:
        raise UndefinedMetricError("empty input")
    return s, b


@dataclass(frozen=True)
class RocCurve:
    """ROC points swept over distinct score thresholds, (0,0) to (1,1)."""

    thresholds: np.ndarray  # descending; +inf first
    fpr: np.ndarray
    tpr: np.ndarray

    def area(self) -> float:
        """Trapezoidal area; equals the rank AUC exactly, ties included."""
        return float(np.trapezoid(self.tpr, self.fpr))


def auc(scores, bad) -> float:
    """P(score_good > score_bad) + 0.5*P(tie), via average ranks in O(n log n)."""
    s, b = _as_score_outcome(scores, np.asarray(bad, dtype=bool))
    n_bad = int(b.sum())
    n_good = s.size - n_bad
    if n_bad == 0 or n_good == 0:
        raise UndefinedMetricError("need at least one defaulter and one non-defaulter")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size)
    sorted_s = s[order]
    # average ranks within tie groups
    boundary = np.flatnonzero(np.diff(sorted_s) != 0) + 1
    starts = np.concatenate(([0], boundary))
    ends = np.concatenate((boundary, [s.size]))
    avg = (starts + ends - 1) / 2.0 + 1.0
    ranks[order] = np.repeat(avg, ends - starts)
    rank_sum_good = ranks[~b].sum()
    return float((rank_sum_good - n_good * (n_good + 1) / 2.0) / (n_good * n_bad))


def roc_curve(scores, bad) -> RocCurve:
    """Admit everyone with score >= threshold; sweep thresholds over distinct scores."""
    s, b = _as_score_outcome(scores, np.asarray(bad, dtype=bool))
    n_bad = int(b.sum())
    n_good = s.size - n_bad
    if n_bad == 0 or n_good == 0:
        raise UndefinedMetricError("need at least one defaulter and one non-defaulter")
    order = np.argsort(-s, kind="mergesort")
    s_desc = s[order]
    bad_desc = b[order]
    cum_bad = np.cumsum(bad_desc)
    cum_good = np.cumsum(~bad_desc)
    last = np.flatnonzero(np.diff(s_desc) != 0)
    last = np.concatenate((last, [s.size - 1]))
    thresholds = np.concatenate(([np.inf], s_desc[last]))
    fpr = np.concatenate(([0.0], cum_bad[last] / n_bad))
    tpr = np.concatenate(([0.0], cum_good[last] / n_good))
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr)


def log_odds_r2(scores, bad, bin_width: float = 1.0) -> Tuple[float, float, float]:
    """Weighted fit of binned default log odds on score.

    Scores are binned to integer multiples of ``bin_width``; each bin's
    default rate comes from ``bad`` (booleans or probabilities); bins with
    rate 0 or 1 are dropped; the remaining log odds are regressed on the
    bin score by least squares weighted with bin counts.

    Returns (weighted r2, slope, intercept).
    """
    s, b = _as_score_outcome(scores, np.asarray(bad, dtype=float))
    bins = np.round(s / bin_width) * bin_width
    uniq, inverse = np.unique(bins, return_inverse=True)
    counts = np.bincount(inverse).astype(float)
    pd_bin = np.bincount(inverse, weights=b) / counts
    usable = (pd_bin > 0.0) & (pd_bin < 1.0)
    if usable.sum() < 2:
        raise InsufficientDataError("need at least 2 bins with interior default rates")
    x = uniq[usable]
    y = np.log(pd_bin[usable] / (1.0 - pd_bin[usable]))
    w = counts[usable]
    xm = np.average(x, weights=w)
    ym = np.average(y, weights=w)
    sxx = np.sum(w * (x - xm) ** 2)
    if sxx == 0:
        raise InsufficientDataError("no score variation across usable bins")
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    sst = np.sum(w * (y - ym) ** 2)
    r2 = 1.0 if sst == 0 else float(1.0 - np.sum(w * resid**2) / sst)
    return r2, slope, intercept


def reverse_regression(scores, bad) -> float:
    """OLS slope of score on the default indicator: mean(score|bad) - mean(score|good).

    ``bad`` may be booleans or default probabilities; probabilities give the
    expectation of the realized-outcome slope.
    """
    s, b = _as_score_outcome(scores, np.asarray(bad, dtype=float))
    wb = b.sum()
    wg = (1.0 - b).sum()
    if wb <= 0 or wg <= 0:
        raise UndefinedMetricError("need both outcome classes")
    return float((s * b).sum() / wb - (s * (1.0 - b)).sum() / wg)


def forward_regression(scores, bad) -> float:
    """OLS slope of the default indicator on score (companion of the reverse slope)."""
    s, b = _as_score_outcome(scores, np.asarray(bad, dtype=float))
    var_s = s.var()
    if var_s == 0:
        raise UndefinedMetricError("no score variation")
    return float(np.mean((s - s.mean()) * (b - b.mean())) / var_s)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValidationError("counts must be non-negative")
        if self.tp + self.fp + self.fn + self.tn == 0:
            raise ValidationError("empty confusion matrix")

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else float("nan")

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else float("nan")

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / (self.tp + self.fp + self.fn + self.tn)


def confusion(pred_bad, actual_bad) -> ConfusionMatrix:
    """Counts with default as the positive class; undefined ratios are NaN, not errors."""
    p = np.asarray(pred_bad, dtype=bool)
    a = np.asarray(actual_bad, dtype=bool)
    if p.shape != a.shape or p.size == 0:
        raise ArgumentError("predictions and outcomes must be equal-length and non-empty")
    return ConfusionMatrix(
        tp=int(np.sum(p & a)),
        fp=int(np.sum(p & ~a)),
        fn=int(np.sum(~p & a)),
        tn=int(np.sum(~p & ~a)),
    )


def reject_inference_tpr(accepted_tpr_by_proxy: Tuple[float, float], reject_proxy_default_share: float) -> float:
    """Mix accepted-sample TPRs over the rejects' proxy-default composition.

    ``accepted_tpr_by_proxy`` is (TPR among accepted with a proxy default,
    TPR among accepted without); the mixture weight is the share of rejects
    showing a proxy default.
    """
    tpr_with, tpr_without = accepted_tpr_by_proxy
    for v in (tpr_with, tpr_without, reject_proxy_default_share):
        if not 0.0 <= v <= 1.0:
            raise ArgumentError(f"inputs must lie in [0,1], got {v}")
    w = reject_proxy_default_share
    return w * tpr_with + (1.0 - w) * tpr_without


@dataclass(frozen=True)
class DecompositionCell:
    """One sub-sample: group AUCs and each group's share of mass in the cell."""

    label: str
    auc_a: float
    auc_b: float
    share_a: float
    share_b: float


def auc_decomposition(cells: Sequence[DecompositionCell], share_tol: float = 1e-8):
    """Split the group AUC gap into a composition term and a residual.

    total    = sum share_a*auc_a - sum share_b*auc_b
    between  = sum (share_a - share_b) * mean(auc_a, auc_b)
    residual = sum (auc_a - auc_b) * mean(share_a, share_b)

    The two terms add up to the total exactly. Shares must sum to one per
    group (within share_tol).
    """
    if not cells:
        raise ValidationError("no cells")
    aa = np.array([c.auc_a for c in cells])
    ab = np.array([c.auc_b for c in cells])
    sa = np.array([c.share_a for c in cells])
    sb = np.array([c.share_b for c in cells])
    for name, s in (("a", sa), ("b", sb)):
        if abs(s.sum() - 1.0) > share_tol:
            raise ValidationError(f"group {name} shares sum to {s.sum():.6f}, expected 1")
    total = float((sa * aa).sum() - (sb * ab).sum())
    between = float(((sa - sb) * (aa + ab) / 2.0).sum())
    residual = float(((aa - ab) * (sa + sb) / 2.0).sum())
    return total, between, residual
