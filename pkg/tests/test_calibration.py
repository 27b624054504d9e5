import itertools
import math
import unittest

import numpy as np
import pytest

from models.calibration import (Calibration, IsotonicMap, PlattParams, apply_isotonic, apply_platt,
                                fit_calibration, fit_isotonic, fit_platt, to_logit)
from models.errors import ConfigError, ConstraintViolation, DegenerateLabels, EmptyInput, NonFinite
from models.metrics import brier


def _brute_force_isotonic(targets, weights):
    """Monotone weighted least squares by trying every split into contiguous blocks."""
    n = len(targets)
    best, best_fit = math.inf, None
    for cuts in itertools.product([False, True], repeat=n - 1):
        blocks, start = [], 0
        for index, cut in enumerate(cuts, start=1):
            if cut:
                blocks.append((start, index))
                start = index
        blocks.append((start, n))

        fit = []
        for lo, hi in blocks:
            w = weights[lo:hi]
            fit.extend([float(np.dot(w, targets[lo:hi]) / w.sum())] * (hi - lo))
        if any(a > b + 1e-12 for a, b in zip(fit, fit[1:])):
            continue
        loss = float(np.dot(weights, (np.array(fit) - targets) ** 2))
        if loss < best - 1e-12:
            best, best_fit = loss, fit
    return np.array(best_fit)


class TestIsotonic(unittest.TestCase):

    def _fitted(self, targets, weights=None):
        scores = np.arange(len(targets), dtype=float)
        return apply_isotonic(fit_isotonic(scores, targets, weights), scores)

    def test_monotone_targets_unchanged(self):
        """Test that already monotone targets are kept as is."""
        np.testing.assert_allclose(self._fitted([0.2, 0.5, 0.9]), [0.2, 0.5, 0.9])

    def test_single_violation_pools(self):
        """Test pooling of one adjacent violator."""
        np.testing.assert_allclose(self._fitted([1.0, 0.0]), [0.5, 0.5])
        np.testing.assert_allclose(self._fitted([0.6, 0.4, 0.8]), [0.5, 0.5, 0.8])

    def test_matches_exhaustive_search(self):
        """Test against brute force over every monotone block partition."""
        rng = np.random.default_rng(8)
        for n in range(1, 8):
            for _ in range(15):
                targets = rng.random(n)
                weights = rng.integers(1, 4, size=n).astype(float)
                np.testing.assert_allclose(self._fitted(targets, weights),
                                           _brute_force_isotonic(targets, weights), atol=1e-10)

    def test_preserves_weighted_mean(self):
        """Pooling keeps the weighted mean of the targets, ties in the scores included."""
        rng = np.random.default_rng(21)
        for _ in range(60):
            n = int(rng.integers(1, 200))
            scores = np.round(rng.random(n), 2)
            targets = (rng.random(n) < scores).astype(float)
            weights = rng.uniform(0.1, 5.0, size=n)
            fitted = apply_isotonic(fit_isotonic(scores, targets, weights), scores)
            self.assertAlmostEqual(float(np.dot(weights, fitted) / weights.sum()),
                                   float(np.dot(weights, targets) / weights.sum()), places=10)
            order = np.argsort(scores, kind='stable')
            self.assertTrue(np.all(np.diff(fitted[order]) >= -1e-12))

    def test_rejects_non_positive_weights(self):
        """Test with a zero weight."""
        with self.assertRaises(ConstraintViolation):
            fit_isotonic([0.1, 0.2], [0.0, 1.0], [1.0, 0.0])

    def test_equal_scores_pool_first(self):
        """Equal scores form one block before any fitting."""
        iso_map = fit_isotonic([0.3, 0.3, 0.7], [1.0, 0.0, 1.0])
        self.assertEqual(iso_map.values, (0.5, 1.0))
        self.assertEqual(iso_map.fit_range, (0.3, 0.7))

    def test_apply_clamps_and_ties(self):
        """Test clamping outside the fit range and step lookup inside it."""
        iso_map = fit_isotonic([1.0, 2.0, 3.0], [0.6, 0.4, 0.8])
        self.assertEqual(apply_isotonic(iso_map, [0.0])[0], 0.5)
        self.assertEqual(apply_isotonic(iso_map, [3.0])[0], 0.8)
        self.assertEqual(apply_isotonic(iso_map, [2.5])[0], 0.5)
        self.assertEqual(apply_isotonic(iso_map, [9.0])[0], 0.8)

    def test_empty_input(self):
        """Test with no scores."""
        with self.assertRaises(EmptyInput):
            fit_isotonic([], [])


@pytest.mark.parametrize('params, raw, expected', [
    (PlattParams(A=0.0, B=0.0), [0.1, 0.5, 0.9], [0.5, 0.5, 0.5]),
    (PlattParams(A=-1.0, B=0.0), [0.1, 0.5, 0.9], [0.1, 0.5, 0.9]),
    (PlattParams(A=0.0, B=math.log(3)), [0.2, 0.7], [0.25, 0.25]),
    (PlattParams(A=3.0, B=1.0), [0.5], [1 / (1 + math.e)]),
])
def test_apply_platt(params, raw, expected):
    """Test the sigmoid map on known parameters."""
    np.testing.assert_allclose(apply_platt(params, raw), expected, atol=1e-12)


def test_to_logit_clamps_extremes():
    """Probabilities of 0 and 1 give finite logits."""
    assert np.all(np.isfinite(to_logit([0.0, 1.0])))


def test_fit_platt_recovers_generating_sigmoid():
    """Test that a large sample recovers the slope and intercept."""
    rng = np.random.default_rng(0)
    s = rng.normal(size=100_000)
    y = rng.random(s.size) < 1 / (1 + np.exp(-(2 * s + 1)))
    params = fit_platt(s, y)
    assert params.A == pytest.approx(-2.0, abs=0.1)
    assert params.B == pytest.approx(-1.0, abs=0.1)


def test_fit_platt_uninformative_scores_give_prevalence():
    """Constant scores calibrate to the base rate."""
    y = np.array([1] * 300 + [0] * 700)
    params = fit_platt(np.zeros(y.size), y)
    assert params.A == pytest.approx(0.0, abs=1e-9)
    assert apply_platt(params, [0.5])[0] == pytest.approx(0.3, abs=0.005)


def test_fit_platt_input_checks():
    """Test with one class and with non-finite scores."""
    with pytest.raises(DegenerateLabels):
        fit_platt([0.1, 0.2], [1, 1])
    with pytest.raises(NonFinite):
        fit_platt([0.1, float('inf')], [0, 1])


@pytest.mark.parametrize('method', ['platt', 'isotonic'])
def test_calibration_repairs_squared_miscalibration(method):
    """Test that both methods lower held-out Brier score."""
    rng = np.random.default_rng(21)
    raw_fit, raw_test = rng.random(5000), rng.random(5000)
    y_fit = rng.random(5000) < raw_fit ** 2
    y_test = rng.random(5000) < raw_test ** 2

    calibration = fit_calibration(method, raw_fit, y_fit, fitted_on='val-fp')
    assert brier(calibration.apply(raw_test), y_test) < brier(raw_test, y_test) - 0.01


def test_calibration_file(tmp_path):
    """Test saving and loading a fitted calibration."""
    calibration = Calibration(method='isotonic', params=IsotonicMap((0.1, 0.4), (0.3, 0.9), (0.2, 0.6)),
                              fitted_on='abc')
    calibration.save(tmp_path / 'cal.json')
    assert Calibration.load(tmp_path / 'cal.json') == calibration


def test_unknown_method():
    """Test with an unsupported method name."""
    with pytest.raises(ConfigError):
        fit_calibration('beta', [0.2, 0.8], [0, 1])
