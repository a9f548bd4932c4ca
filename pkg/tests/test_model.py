import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from screenkit.errors import ArgumentError, DimensionError, ParameterError
from screenkit.model import (
    GroupModel,
    RiskParams,
    ScoreMap,
    SignalSpec,
    default_prob,
    posterior,
    posterior_array,
    sample_population,
    score_of_signal,
    signal_of_score,
)

finite = st.floats(min_value=-50, max_value=50, allow_nan=False)
precision = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


class TestPosterior:
    def test_equal_weight_average(self):
        assert posterior([2.0], SignalSpec((1.0,)), RiskParams(0.0, 1.0)) == pytest.approx(1.0)

    def test_symmetric_weights(self):
        assert posterior([3.0, 0.0], SignalSpec((1.0, 1.0)), RiskParams(0.0, 1.0)) == pytest.approx(1.0)

    def test_zero_noise_limit_pins_posterior_to_signal(self):
        x = posterior([5.0], SignalSpec((1e12,)), RiskParams(0.0, 1.0))
        assert x == pytest.approx(5.0, abs=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            posterior([1.0, 2.0], SignalSpec((1.0,)), RiskParams(0.0, 1.0))

    def test_nonpositive_precision_rejected(self):
        with pytest.raises(ParameterError):
            SignalSpec((0.0,))
        with pytest.raises(ParameterError):
            RiskParams(0.0, -1.0)

    @given(s1=finite, s2=finite, h1=precision, h2=precision, mu0=finite, h0=precision)
    def test_convex_combination(self, s1, s2, h1, h2, mu0, h0):
        x = posterior([s1, s2], SignalSpec((h1, h2)), RiskParams(mu0, h0))
        assert min(mu0, s1, s2) - 1e-9 <= x <= max(mu0, s1, s2) + 1e-9

    @given(s1=finite, h1=precision, mu0=finite, h0=precision, bump=st.floats(min_value=0.1, max_value=100))
    def test_raising_precision_moves_posterior_toward_signal(self, s1, h1, mu0, h0, bump):
        risk = RiskParams(mu0, h0)
        x0 = posterior([s1], SignalSpec((h1,)), risk)
        x1 = posterior([s1], SignalSpec((h1 + bump,)), risk)
        assert abs(s1 - x1) <= abs(s1 - x0) + 1e-12


class TestDefaultProb:
    def test_symmetry_point(self):
        assert default_prob(0.0) == pytest.approx(0.5)

    def test_closed_form(self):
        assert default_prob(math.log(3)) == pytest.approx(0.25)

    def test_mean_type_level(self):
        # safe mean type maps to a few-percent default probability
        assert default_prob(2.89) == pytest.approx(0.0526, abs=5e-4)

    @given(t=finite)
    def test_complement_identity(self, t):
        assert default_prob(t) + default_prob(-t) == pytest.approx(1.0, abs=1e-12)

    @given(t=st.floats(min_value=-15, max_value=15), dt=st.floats(min_value=1e-3, max_value=10))
    def test_strictly_decreasing(self, t, dt):
        # restricted to the range where float64 resolves the difference
        assert default_prob(t + dt) < default_prob(t)

    def test_log_odds_identity(self):
        t = 1.7
        d = default_prob(t)
        assert math.log(d / (1 - d)) == pytest.approx(-t, abs=1e-12)

    def test_saturates_without_error(self):
        assert default_prob(1e6) == 0.0
        assert default_prob(-1e6) == 1.0


class TestScoreMap:
    def test_identity_up_to_sign_convention(self):
        assert score_of_signal(3.0, ScoreMap(0.0, -1.0)) == pytest.approx(3.0)

    def test_round_trip(self):
        m = ScoreMap(660.0, -15.0)
        for s in (-5.0, 0.0, 5.0):
            assert signal_of_score(score_of_signal(s, m), m) == pytest.approx(s, abs=1e-12)

    def test_zero_slope_rejected(self):
        with pytest.raises(ParameterError):
            ScoreMap(0.0, 0.0)

    def test_decreasing_map_rejected(self):
        with pytest.raises(ParameterError):
            ScoreMap(0.0, 1.0)

    def test_two_point_fit_recovers_positive_slope(self, minority_model, score_map):
        # fit (a1, a2) so simulated approved/rejected score means hit 694/655
        pop = sample_population(minority_model, score_map, 100_000, 7)
        appr = pop.posterior >= minority_model.threshold
        m_a = pop.signals[appr, 0].mean()
        m_r = pop.signals[~appr, 0].mean()
        slope = (694.0 - 655.0) / (m_a - m_r)
        a1 = 694.0 - slope * m_a
        fitted = ScoreMap(a1=a1, a2=-slope)
        assert fitted.slope > 0
        check = score_of_signal(pop.signals[appr, 0], fitted).mean()
        assert check == pytest.approx(694.0, abs=1e-6)


class TestSamplePopulation:
    def test_degenerate_prior_collapses_types(self, score_map):
        model = GroupModel(RiskParams(1.5, 1e12), SignalSpec((1.0,)), 0.0, "g")
        pop = sample_population(model, score_map, 10_000, 3)
        assert np.abs(pop.theta - 1.5).max() < 1e-5

    def test_minority_mean_within_three_se(self, minority_model, score_map):
        n = 1_000_000
        pop = sample_population(minority_model, score_map, n, 11)
        se = math.sqrt(15.96 / n)
        assert abs(pop.theta.mean() - 1.13) < 3 * se

    def test_score_noise_variance(self, minority_model, score_map):
        pop = sample_population(minority_model, score_map, 1_000_000, 11)
        noise = pop.signals[:, 0] - pop.theta
        assert noise.var() == pytest.approx(2.46, rel=0.02)

    def test_rows_satisfy_posterior_and_score_identities(self, minority_model, score_map):
        pop = sample_population(minority_model, score_map, 500, 5)
        recomputed = posterior_array(pop.signals, minority_model.signals, minority_model.risk)
        assert np.abs(recomputed - pop.posterior).max() < 1e-10
        assert np.abs(score_of_signal(pop.signals[:, 0], score_map) - pop.score).max() < 1e-10
        first = next(pop.applicants())
        assert first.group == "minority"

    def test_zero_applicants_rejected(self, minority_model, score_map):
        with pytest.raises(ArgumentError):
            sample_population(minority_model, score_map, 0, 1)

    def test_deterministic_and_thread_invariant(self, minority_model, score_map):
        a = sample_population(minority_model, score_map, 300_000, 9, threads=1)
        b = sample_population(minority_model, score_map, 300_000, 9, threads=4)
        for name in ("theta", "signals", "posterior", "score", "defaulted"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_conditional_law_of_theta_given_posterior(self, minority_model, score_map):
        # theta | posterior = x is Normal(x, 1/total precision)
        n = 1_000_000
        pop = sample_population(minority_model, score_map, n, 13)
        x_star = float(np.median(pop.posterior))
        band = np.abs(pop.posterior - x_star) < 0.01
        theta = pop.theta[band]
        k = theta.size
        assert k > 1000
        v = 1.0 / minority_model.total_precision
        se_mean = math.sqrt(v / k)
        assert abs(theta.mean() - x_star) < 3 * se_mean + 0.01
        se_var = math.sqrt(2.0 / (k - 1)) * v
        assert abs(theta.var(ddof=1) - v) < 3 * se_var
