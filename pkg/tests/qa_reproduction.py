#!/usr/bin/env python3
"""
Long-running checks of published thresholds and BER behaviour

Enabled with GR_JIDDS_SLOW=1; each test takes minutes.
"""

import os
import sys
import unittest

import numpy as np

# Prefer the installed gr_jidds; fallback to local python
try:
    import gr_jidds  # noqa: F401
except ImportError:
    sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "python"))

from gr_jidds.channel2d import ChannelMatrix
from gr_jidds.density_evolution import DeSettings, de_run, threshold_search
from gr_jidds.jidds import (
    IterationSchedule,
    JiddsReceiver,
    SweepSettings,
    ber_sweep,
    build_link,
    detector_ber_compare,
    sweep_points,
)
from gr_jidds.ldpc_code import DegreeDistribution

SLOW = os.environ.get("GR_JIDDS_SLOW") == "1"


@unittest.skipUnless(SLOW, "set GR_JIDDS_SLOW=1 to run the long reproduction checks")
class qa_reproduction(unittest.TestCase):
    """Test suite for thresholds and BER curves"""

    def setUp(self):
        """Set up test fixtures"""
        self.settings = DeSettings(workers=os.cpu_count() or 1)
        self.ha = ChannelMatrix.preset("HA")

    def threshold(self, d_v, d_c, channel, bracket, mode="te"):
        degrees = DegreeDistribution.regular(d_v, d_c)
        return threshold_search(degrees, channel, mode=mode, tol=0.01, bracket=bracket, settings=self.settings)

    def test_001_awgn_threshold(self):
        """Test the (3,6) threshold of the memoryless channel"""
        report = self.threshold(3, 6, ChannelMatrix.preset("AWGN"), (0.8, 0.95))
        self.assertAlmostEqual(report.sigma, 0.88, delta=0.02)

    def test_002_high_rate_awgn_threshold(self):
        """Test the (3,20) threshold of the memoryless channel"""
        report = self.threshold(3, 20, ChannelMatrix.preset("AWGN"), (0.45, 0.65))
        self.assertAlmostEqual(report.sigma, 0.54, delta=0.02)

    def test_003_ha_thresholds(self):
        """Test turbo-equalized and single-pass thresholds on the first channel"""
        te = self.threshold(3, 6, self.ha, (0.7, 0.9))
        self.assertAlmostEqual(te.sigma, 0.81, delta=0.02)
        self.assertAlmostEqual(te.snr_db, 2.674, delta=0.25)
        non_te = self.threshold(3, 6, self.ha, (0.6, 0.85), mode="non-te")
        self.assertAlmostEqual(non_te.sigma, 0.73, delta=0.02)
        self.assertGreater(te.sigma, non_te.sigma)

    def test_004_hb_threshold(self):
        """Test the (3,4) threshold on the second channel"""
        report = self.threshold(3, 4, ChannelMatrix.preset("HB"), (1.1, 1.35))
        self.assertAlmostEqual(report.sigma, 1.22, delta=0.02)

    def test_005_trajectory_below_threshold(self):
        """Test the outer-round error probability decreases to zero just below threshold"""
        trace = de_run(DegreeDistribution.regular(3, 6), self.ha, 0.80, self.settings, np.random.default_rng(0))
        self.assertTrue(trace.converged)
        p = [row[2] for row in trace.rounds]
        self.assertLess(p[-1], p[0])

    def test_006_windowed_detector(self):
        """Test a 5x5 half-width window stays close to the full-page detector"""
        points = sweep_points(self.ha, 1.0, sigma_grid=[0.6])
        settings = SweepSettings(max_frames=20, min_errors=500, workers=os.cpu_count() or 1)
        (row,) = detector_ber_compare(self.ha, (64, 64), points, settings, window=(5, 5))
        self.assertGreater(row.full_errors, 0)
        self.assertLessEqual(row.window_ber, 1.2 * row.full_ber)

    def test_007_outer_iterations_help(self):
        """Test more detector/decoder rounds never raise the coded BER"""
        code, channel, mapping = build_link("4096,3,6", channel="HA", mapping="random", mapping_seed=1)
        points = sweep_points(channel, code.rate, sigma_grid=[0.76])
        settings = SweepSettings(max_frames=20, min_errors=10_000, workers=os.cpu_count() or 1)
        results = {}
        for rounds in (1, 10):
            receiver = JiddsReceiver(code, mapping, channel, IterationSchedule(3, 50, rounds))
            (results[rounds],) = ber_sweep(receiver, points, settings)
        self.assertLessEqual(results[10].bit_errors, results[1].bit_errors)

    def test_008_trajectory_at_threshold(self):
        """Test the error probability of each outer round at sigma 0.81 on the first channel"""
        expected = [0.120135, 0.101857, 0.086699, 0.011226, 0.0]
        trace = de_run(DegreeDistribution.regular(3, 6), self.ha, 0.81, self.settings, np.random.default_rng(0))
        p = [row[2] for row in trace.rounds]
        self.assertTrue(trace.converged)
        self.assertEqual(len(p), len(expected))
        for t, (got, want) in enumerate(zip(p, expected), start=1):
            self.assertAlmostEqual(got, want, delta=0.01, msg=f"outer round {t}")


if __name__ == "__main__":
    unittest.main()
