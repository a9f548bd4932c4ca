import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from screenkit.errors import ArgumentError, InsufficientDataError, UndefinedMetricError, ValidationError
from screenkit.metrics import (
    ConfusionMatrix,
    DecompositionCell,
    auc,
    auc_decomposition,
    confusion,
    forward_regression,
    log_odds_r2,
    reject_inference_tpr,
    reverse_regression,
    roc_curve,
)


def auc_bruteforce(scores, bad):
    """O(n^2) pairwise oracle: wins plus half ties over all good/bad pairs."""
    s = np.asarray(scores, dtype=float)
    b = np.asarray(bad, dtype=bool)
    good = s[~b]
    badv = s[b]
    wins = (good[:, None] > badv[None, :]).sum()
    ties = (good[:, None] == badv[None, :]).sum()
    return (wins + 0.5 * ties) / (good.size * badv.size)


class TestAuc:
    def test_perfect_separation(self):
        assert auc([1, 2, 3, 4], [True, True, False, False]) == 1.0

    def test_pure_ties(self):
        assert auc([5, 5, 5, 5], [True, False, True, False]) == 0.5

    def test_one_win_one_loss(self):
        assert auc([1, 2, 3], [True, False, True]) == 0.5

    def test_single_class_raises(self):
        with pytest.raises(UndefinedMetricError):
            auc([1, 2], [True, True])

    def test_matches_bruteforce_with_ties(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            n = rng.integers(5, 400)
            scores = rng.integers(0, 12, size=n).astype(float)
            bad = rng.random(n) < 0.4
            if bad.all() or not bad.any():
                continue
            assert abs(auc(scores, bad) - auc_bruteforce(scores, bad)) < 1e-12

    @given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=4, max_size=60))
    def test_invariant_to_increasing_transform(self, rows):
        scores = np.array([r[0] for r in rows], dtype=float)
        bad = np.array([r[1] for r in rows])
        if bad.all() or not bad.any():
            return
        base = auc(scores, bad)
        assert auc(3.0 * scores + 7.0, bad) == pytest.approx(base, abs=1e-12)
        assert auc(np.exp(scores / 3.0), bad) == pytest.approx(base, abs=1e-12)


class TestRocCurve:
    def test_endpoints_and_monotonicity(self):
        rng = np.random.default_rng(1)
        scores = rng.integers(0, 50, 500).astype(float)
        bad = rng.random(500) < 0.3
        curve = roc_curve(scores, bad)
        assert curve.fpr[0] == 0.0 and curve.tpr[0] == 0.0
        assert curve.fpr[-1] == 1.0 and curve.tpr[-1] == 1.0
        assert (np.diff(curve.fpr) >= 0).all() and (np.diff(curve.tpr) >= 0).all()

    def test_trapezoid_area_equals_auc(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n = int(rng.integers(10, 500))
            scores = rng.integers(0, 15, n).astype(float)
            bad = rng.random(n) < 0.5
            if bad.all() or not bad.any():
                continue
            assert abs(roc_curve(scores, bad).area() - auc(scores, bad)) < 1e-12


class TestLogOddsR2:
    def test_exact_affine_log_odds(self):
        scores = np.repeat(np.arange(600, 700, dtype=float), 50)
        pd = 1.0 / (1.0 + np.exp(-(4.0 - 0.01 * scores)))
        r2, slope, intercept = log_odds_r2(scores, pd)
        assert r2 == pytest.approx(1.0, abs=1e-9)
        assert slope == pytest.approx(-0.01, abs=1e-9)
        assert intercept == pytest.approx(4.0, abs=1e-6)

    def test_noise_attenuates_slope(self):
        rng = np.random.default_rng(3)
        n = 200_000
        theta = rng.standard_normal(n) * 2.0
        pd = 1.0 / (1.0 + np.exp(theta))
        bad = rng.random(n) < pd
        clean = 650 + 20 * (theta + np.sqrt(0.5) * rng.standard_normal(n))
        noisy = 650 + 20 * (theta + np.sqrt(2.46) * rng.standard_normal(n))
        _, slope_clean, _ = log_odds_r2(clean, bad)
        _, slope_noisy, _ = log_odds_r2(noisy, bad)
        assert abs(slope_noisy) < abs(slope_clean)

    def test_too_few_bins(self):
        with pytest.raises(InsufficientDataError):
            log_odds_r2([1.0] * 10, [True, False] * 5)


class TestRegressions:
    def test_identical_class_means_zero_slope(self):
        assert reverse_regression([1, 2, 1, 2], [True, False, False, True]) == pytest.approx(0.0)

    def test_two_point_difference_of_means(self):
        assert reverse_regression([700.0, 660.0], [False, True]) == pytest.approx(-40.0)

    def test_single_class_raises(self):
        with pytest.raises(UndefinedMetricError):
            reverse_regression([1, 2], [False, False])

    def test_forward_times_reverse_is_squared_correlation(self):
        rng = np.random.default_rng(4)
        s = rng.standard_normal(2000) * 30 + 700
        bad = rng.random(2000) < 1.0 / (1.0 + np.exp((s - 690) / 25))
        fwd = forward_regression(s, bad)
        rev = reverse_regression(s, bad)
        # population OLS identity, exact up to the dof convention in var
        r2 = np.corrcoef(s, bad.astype(float))[0, 1] ** 2
        assert fwd * rev == pytest.approx(r2, rel=1e-6)


class TestConfusion:
    def test_reported_panel(self):
        m = ConfusionMatrix(tp=371_583, fp=520_148, fn=685_306, tn=17_244_537)
        assert round(m.precision, 2) == 0.42
        assert round(m.recall, 2) == 0.35
        assert round(m.accuracy, 2) == 0.94

    def test_perfect_prediction(self):
        m = confusion([True, False, True], [True, False, True])
        assert m.precision == m.recall == m.accuracy == 1.0

    def test_all_negative_predictions(self):
        m = confusion([False, False], [True, False])
        assert m.recall == 0.0
        assert np.isnan(m.precision)


class TestRejectInference:
    def test_worked_examples(self):
        assert reject_inference_tpr((0.72, 0.93), 0.32) == pytest.approx(0.8628, abs=5e-4)
        assert reject_inference_tpr((0.78, 0.97), 0.22) == pytest.approx(0.9282, abs=5e-4)

    def test_zero_share_returns_no_proxy_rate(self):
        assert reject_inference_tpr((0.5, 0.91), 0.0) == 0.91

    def test_out_of_range_rejected(self):
        with pytest.raises(ArgumentError):
            reject_inference_tpr((1.2, 0.5), 0.1)


class TestDecomposition:
    def make_cells(self, aucs_a, aucs_b, shares_a, shares_b):
        return [
            DecompositionCell(f"c{i}", a, b, sa, sb)
            for i, (a, b, sa, sb) in enumerate(zip(aucs_a, aucs_b, shares_a, shares_b))
        ]

    def test_identity_exact(self):
        cells = self.make_cells([0.8, 0.7, 0.9], [0.75, 0.65, 0.85], [0.2, 0.5, 0.3], [0.4, 0.4, 0.2])
        total, between, residual = auc_decomposition(cells)
        assert abs(total - between - residual) < 1e-12

    def test_identical_shares_zero_between(self):
        cells = self.make_cells([0.8, 0.7], [0.7, 0.6], [0.5, 0.5], [0.5, 0.5])
        _, between, _ = auc_decomposition(cells)
        assert between == pytest.approx(0.0, abs=1e-15)

    def test_identical_aucs_zero_residual(self):
        cells = self.make_cells([0.8, 0.7], [0.8, 0.7], [0.6, 0.4], [0.3, 0.7])
        _, _, residual = auc_decomposition(cells)
        assert residual == pytest.approx(0.0, abs=1e-15)

    def test_share_sum_validated(self):
        cells = self.make_cells([0.8, 0.7], [0.7, 0.6], [0.5, 0.4], [0.5, 0.5])
        with pytest.raises(ValidationError):
            auc_decomposition(cells)
