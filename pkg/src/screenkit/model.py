"""Structural primitives: type and signal distributions, Bayesian posterior,
default probability, score map, and the population sampler.

Conventions. The latent type ``theta`` lives on a log-odds-of-repayment
scale: higher theta is safer, and the default probability is
``1/(1+exp(theta))``, strictly decreasing. Signal k observes
``theta + noise`` with noise precision ``h_k``. The credit score is an
affine map of the default log odds implied by signal 1, so the score is
increasing in the signal whenever the stored slope ``a2`` is negative
(``slope = -a2 > 0`` in signal units).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from . import rng
from .errors import ArgumentError, DimensionError, ParameterError


def _require_finite(name, *values):
    for v in values:
        if not math.isfinite(v):
            raise ParameterError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class RiskParams:
    """Latent-type distribution: theta ~ Normal(mu0, 1/h0)."""

    mu0: float
    h0: float

    def __post_init__(self):
        _require_finite("RiskParams", self.mu0, self.h0)
        if self.h0 <= 0:
            raise ParameterError(f"prior precision h0 must be positive, got {self.h0}")

    @property
    def var_theta(self) -> float:
        return 1.0 / self.h0


@dataclass(frozen=True)
class SignalSpec:
    """Ordered signal precisions; index 0 is the credit-score signal."""

    precisions: tuple

    def __post_init__(self):
        object.__setattr__(self, "precisions", tuple(float(h) for h in self.precisions))
        if not 1 <= len(self.precisions) <= 2:
            raise ParameterError(f"expected 1 or 2 signals, got {len(self.precisions)}")
        for h in self.precisions:
            _require_finite("SignalSpec", h)
            if h <= 0:
                raise ParameterError(f"signal precision must be positive, got {h}")

    @property
    def k(self) -> int:
        return len(self.precisions)

    @property
    def total(self) -> float:
        return float(sum(self.precisions))

    def drop_second(self) -> "SignalSpec":
        return SignalSpec(self.precisions[:1])

    def with_score_precision(self, h1: float) -> "SignalSpec":
        return SignalSpec((h1,) + self.precisions[1:])


@dataclass(frozen=True)
class ScoreMap:
    """score = a1 + a2 * log-odds of default at the signal value = a1 - a2*s."""

    a1: float
    a2: float

    def __post_init__(self):
        _require_finite("ScoreMap", self.a1, self.a2)
        if self.a2 == 0:
            raise ParameterError("a2 must be nonzero")
        if -self.a2 <= 0:
            raise ParameterError("score must increase in the signal (requires a2 < 0)")

    @property
    def slope(self) -> float:
        """d score / d signal, positive."""
        return -self.a2


@dataclass(frozen=True)
class GroupModel:
    """Per-group structural parameters plus the approval threshold."""

    risk: RiskParams
    signals: SignalSpec
    threshold: float
    label: str

    def __post_init__(self):
        _require_finite("GroupModel.threshold", self.threshold)
        if not self.label:
            raise ParameterError("group label must be non-empty")

    @property
    def total_precision(self) -> float:
        """Posterior precision h0 + sum of signal precisions."""
        return self.risk.h0 + self.signals.total

    @property
    def posterior_sd(self) -> float:
        """Cross-sectional standard deviation of the posterior mean."""
        v = self.risk.var_theta - 1.0 / self.total_precision
        return math.sqrt(max(v, 0.0))


def posterior(signals: Sequence[float], spec: SignalSpec, risk: RiskParams) -> float:
    """Bayesian posterior mean of theta given the signal vector."""
    s = np.asarray(signals, dtype=float)
    if s.shape != (spec.k,):
        raise DimensionError(f"expected {spec.k} signals, got shape {s.shape}")
    h = np.asarray(spec.precisions)
    return float((h @ s + risk.h0 * risk.mu0) / (h.sum() + risk.h0))


def posterior_array(signals: np.ndarray, spec: SignalSpec, risk: RiskParams) -> np.ndarray:
    """Vectorized posterior for an (n, K) signal matrix."""
    s = np.asarray(signals, dtype=float)
    if s.ndim != 2 or s.shape[1] != spec.k:
        raise DimensionError(f"expected (n, {spec.k}) signals, got shape {s.shape}")
    h = np.asarray(spec.precisions)
    return (s @ h + risk.h0 * risk.mu0) / (h.sum() + risk.h0)


def default_prob(theta):
    """P(default | theta) = 1/(1+exp(theta)); decreasing, log-odds = -theta."""
    from scipy.special import expit

    out = expit(-np.asarray(theta, dtype=float))
    return float(out) if np.isscalar(theta) or out.ndim == 0 else out


def score_of_signal(s, score_map: ScoreMap):
    """score = a1 - a2*s (affine in the signal through the default log odds)."""
    return score_map.a1 - score_map.a2 * np.asarray(s, dtype=float)


def signal_of_score(score, score_map: ScoreMap):
    """Exact inverse of score_of_signal."""
    return (score_map.a1 - np.asarray(score, dtype=float)) / score_map.a2


@dataclass(frozen=True)
class Applicant:
    theta: float
    signals: tuple
    posterior: float
    score: float
    defaulted: bool
    group: str


@dataclass
class Population:
    """Array-backed simulated applicant pool.

    Individual rows are exposed through :meth:`applicants` as
    :class:`Applicant` views; bulk work should use the arrays directly.
    """

    model: GroupModel
    score_map: ScoreMap
    seed: int
    theta: np.ndarray
    signals: np.ndarray  # (n, K)
    posterior: np.ndarray
    score: np.ndarray
    defaulted: np.ndarray  # bool

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    def default_probs(self) -> np.ndarray:
        return default_prob(self.theta)

    def applicants(self) -> Iterator[Applicant]:
        for i in range(self.n):
            yield Applicant(
                theta=float(self.theta[i]),
                signals=tuple(self.signals[i]),
                posterior=float(self.posterior[i]),
                score=float(self.score[i]),
                defaulted=bool(self.defaulted[i]),
                group=self.model.label,
            )


def sample_population(
    model: GroupModel,
    score_map: ScoreMap,
    n: int,
    seed: int,
    threads: int = 1,
    theta_override: Optional[np.ndarray] = None,
) -> Population:
    """Draw n applicants: theta, signals, posterior, score, default outcome.

    Deterministic in (model, score_map, n, seed) regardless of thread
    count. Each variable owns an independent substream, so redrawing the
    same seed under a modified SignalSpec reuses the identical theta and
    noise draws (common random numbers across counterfactual scenarios).
    """
    n = int(n)
    if n < 1:
        raise ArgumentError("n must be >= 1")
    risk, spec = model.risk, model.signals
    sd_theta = math.sqrt(risk.var_theta)
    if theta_override is not None:
        theta = np.asarray(theta_override, dtype=float)
        if theta.shape != (n,):
            raise DimensionError("theta_override must have shape (n,)")
    else:
        theta = risk.mu0 + sd_theta * rng.substream_normal(seed, n, rng.STREAM_THETA, threads)
    signals = np.empty((n, spec.k))
    for k, h in enumerate(spec.precisions):
        z = rng.substream_normal(seed, n, rng.STREAM_SIGNAL + k, threads)
        signals[:, k] = theta + z / math.sqrt(h)
    post = posterior_array(signals, spec, risk)
    score = score_of_signal(signals[:, 0], score_map)
    u = rng.substream_uniform(seed, n, rng.STREAM_DEFAULT, threads)
    defaulted = u < default_prob(theta)
    return Population(
        model=model,
        score_map=score_map,
        seed=int(seed),
        theta=theta,
        signals=signals,
        posterior=post,
        score=score,
        defaulted=defaulted,
    )
