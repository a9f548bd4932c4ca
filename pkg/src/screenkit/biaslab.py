"""Logistic-model testbed for modeling-bias experiments.

Synthetic two-group feature data realize the four quadrants of
feature-distribution x conditional-expectation differences, and pooled,
group-split, equal-n split, and re-weighted training are compared on
held-out AUC and Brier MSE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ArgumentError, InsufficientDataError
from .metrics import auc

SCENARIOS = ("same-X-same-CEF", "same-X-diff-CEF", "diff-X-same-CEF", "diff-X-diff-CEF")
MODES = ("pooled", "split", "split-same-n", "reweighted")

# documented scenario parameterization: 2-d Gaussian features, logistic outcomes
CEF_BASE = (-1.0, 2.2, 0.4)          # intercept, slopes for group A (and B when CEFs match)
CEF_ALT = (-1.0, 0.4, 1.1)           # group B under different-CEF quadrants
XSHIFT_ALT = (1.2, -0.8)             # group B feature means under different-X quadrants
MINORITY_FRACTION = 0.25             # group B size relative to n_per_group
COEF_CAP = 30.0


@dataclass
class FeatureDataset:
    x: np.ndarray          # (n, d)
    bad: np.ndarray        # bool
    group: np.ndarray      # labels 'a' / 'b'
    scenario: str

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ArgumentError(f"unknown scenario {self.scenario!r}")
        if len(set(np.unique(self.group))) < 2:
            raise ArgumentError("both groups must be present")


@dataclass(frozen=True)
class LogisticModel:
    coef: np.ndarray       # intercept first
    separated: bool = False

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        z = self.coef[0] + np.asarray(x, dtype=float) @ self.coef[1:]
        return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def make_scenario(tag: str, n_per_group: int, seed: int) -> FeatureDataset:
    """Two-group dataset for one quadrant; group b has MINORITY_FRACTION the size."""
    if tag not in SCENARIOS:
        raise ArgumentError(f"unknown scenario {tag!r}")
    g = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 0xb1a5))))
    n_a = int(n_per_group)
    n_b = max(int(n_per_group * MINORITY_FRACTION), 10)
    diff_x = tag.startswith("diff-X")
    diff_cef = tag.endswith("diff-CEF")
    xa = g.standard_normal((n_a, 2))
    xb = g.standard_normal((n_b, 2))
    if diff_x:
        xb = xb + np.asarray(XSHIFT_ALT)
    cef_b = CEF_ALT if diff_cef else CEF_BASE
    pa = 1.0 / (1.0 + np.exp(-(CEF_BASE[0] + xa @ np.asarray(CEF_BASE[1:]))))
    pb = 1.0 / (1.0 + np.exp(-(cef_b[0] + xb @ np.asarray(cef_b[1:]))))
    bad = np.concatenate([g.random(n_a) < pa, g.random(n_b) < pb])
    return FeatureDataset(
        x=np.vstack([xa, xb]),
        bad=bad,
        group=np.array(["a"] * n_a + ["b"] * n_b),
        scenario=tag,
    )


def bayes_auc(tag: str, group: str, n: int = 200_000, seed: int = 7) -> float:
    """AUC of the true conditional default probability on the group's own data."""
    data = make_scenario(tag, n, seed)
    mask = data.group == group
    cef = CEF_ALT if (group == "b" and tag.endswith("diff-CEF")) else CEF_BASE
    p = 1.0 / (1.0 + np.exp(-(cef[0] + data.x[mask] @ np.asarray(cef[1:]))))
    return auc(1.0 - p, data.bad[mask])


def train_logistic(
    x: np.ndarray,
    bad: np.ndarray,
    weights: Optional[np.ndarray] = None,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> LogisticModel:
    """Weighted logistic regression by iteratively reweighted least squares.

    Converges to gradient norm < tol; perfect separation yields capped
    coefficients with the ``separated`` flag instead of an error.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(bad, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ArgumentError("x must be (n, d) with matching outcomes")
    if y.min() == y.max():
        raise InsufficientDataError("need both outcome classes to fit")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != y.shape or (w < 0).any() or w.sum() == 0:
        raise ArgumentError("weights must be non-negative with positive total")
    design = np.column_stack([np.ones(len(y)), x])
    beta = np.zeros(design.shape[1])
    for _ in range(max_iter):
        z = np.clip(design @ beta, -500, 500)
        p = 1.0 / (1.0 + np.exp(-z))
        grad = design.T @ (w * (y - p))
        if np.linalg.norm(grad) < tol:
            return LogisticModel(coef=beta)
        h = p * (1.0 - p)
        hess = design.T @ (design * (w * h)[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        beta = beta + step
        if np.abs(beta).max() > COEF_CAP:
            break
    return LogisticModel(coef=np.clip(beta, -COEF_CAP, COEF_CAP), separated=True)


def _stratified_split(data: FeatureDataset, seed: int, test_frac: float = 0.30):
    """70/30 split stratified by (group, outcome)."""
    g = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 0x5417))))
    test = np.zeros(len(data.bad), dtype=bool)
    for grp in np.unique(data.group):
        for out in (False, True):
            idx = np.flatnonzero((data.group == grp) & (data.bad == out))
            idx = g.permutation(idx)
            test[idx[: int(round(test_frac * idx.size))]] = True
    return ~test, test


def run_bias_experiment(data: FeatureDataset, mode: str, seed: int = 0) -> Dict[str, Dict[str, float]]:
    """Train under one mode and return held-out {group: {auc, mse}}."""
    if mode not in MODES:
        raise ArgumentError(f"unknown mode {mode!r}; expected one of {MODES}")
    train, test = _stratified_split(data, seed)
    groups = np.unique(data.group)

    def fit(mask, weights=None):
        return train_logistic(data.x[mask], data.bad[mask], weights=weights)

    models: Dict[str, LogisticModel] = {}
    if mode == "pooled":
        m = fit(train)
        models = {grp: m for grp in groups}
    elif mode == "reweighted":
        counts = {grp: np.sum(train & (data.group == grp)) for grp in groups}
        w = np.array([1.0 / counts[grp] for grp in data.group[train]])
        w *= w.size / w.sum()
        m = train_logistic(data.x[train], data.bad[train], weights=w)
        models = {grp: m for grp in groups}
    else:
        sizes = {grp: int(np.sum(train & (data.group == grp))) for grp in groups}
        n_min = min(sizes.values())
        g = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 0x57))))
        for grp in groups:
            mask = train & (data.group == grp)
            if mode == "split-same-n" and sizes[grp] > n_min:
                idx = g.permutation(np.flatnonzero(mask))[:n_min]
                mask = np.zeros_like(mask)
                mask[idx] = True
            models[grp] = fit(mask)

    out: Dict[str, Dict[str, float]] = {}
    for grp in groups:
        mask = test & (data.group == grp)
        p = models[grp].predict_proba(data.x[mask])
        y = data.bad[mask]
        out[str(grp)] = {
            "auc": auc(1.0 - p, y),
            "mse": float(np.mean((p - y.astype(float)) ** 2)),
        }
    return out
