#!/usr/bin/env python3
"""
Unit tests for the iterative 2D detector (full page and windowed)
"""

import itertools
import os
import sys
import unittest

import numpy as np
from scipy.special import logsumexp

# Prefer the installed gr_jidds; fallback to local python
try:
    import gr_jidds  # noqa: F401
except ImportError:
    sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "python"))

from gr_jidds.channel2d import H_A, BipolarGrid, ChannelMatrix, convolve2d
from gr_jidds.detector2d import (
    LLR_CLAMP,
    SymbolAlphabet,
    TrellisSpec,
    bit_log_priors,
    bit_to_symbol,
    cross_track_bcjr,
    detect,
    detect_batch,
    detect_windowed,
    down_track_bcjr,
    max_star,
    max_star_reduce,
)
from gr_jidds.exceptions import DimensionError


def random_page(rng, n_rows, n_cols):
    return (2 * rng.integers(0, 2, size=(n_rows, n_cols)) - 1).astype(np.int8)


def exhaustive_down_track(r, sigma, channel, l_id, left_known=True):
    """Symbol log-posteriors of one row by enumerating every symbol sequence."""
    alphabet = SymbolAlphabet(channel.m_h)
    lead = channel.n_h - 1
    n_cols = len(r)
    if left_known:
        guards = [(0,) * lead]
    else:
        guards = list(itertools.product(range(alphabet.size), repeat=lead))
    log_post = np.full((n_cols, alphabet.size), -np.inf)
    for guard in guards:
        for row in itertools.product(range(alphabet.size), repeat=n_cols):
            symbols = guard + row
            weight = 0.0
            for j in range(n_cols):
                y = sum(alphabet.vectors[symbols[lead + j - p]] @ channel.h[:, p] for p in range(channel.n_h))
                weight += l_id[j, row[j]] - (r[j] - y) ** 2 / (2.0 * sigma**2)
            for j, a in enumerate(row):
                log_post[j, a] = np.logaddexp(log_post[j, a], weight)
    return log_post - logsumexp(log_post, axis=-1, keepdims=True)


def exhaustive_cross_track(l_ic, bit_priors, m_h, top_known=True):
    """Transition-symbol log-posteriors and bit LLRs of one column by enumeration."""
    n_rows, n_symbols = l_ic.shape
    guards = [(0,) * (m_h - 1)] if top_known else list(itertools.product((0, 1), repeat=m_h - 1))
    log_symbols = np.full((n_rows, n_symbols), -np.inf)
    log_bits = np.full((n_rows, 2), -np.inf)
    for guard in guards:
        for column in itertools.product((0, 1), repeat=n_rows):
            padded = guard + column
            symbols = [sum(padded[m_h - 1 + i - k] << k for k in range(m_h)) for i in range(n_rows)]
            weight = sum(l_ic[i, a] + bit_priors[i, column[i]] for i, a in enumerate(symbols))
            for i, a in enumerate(symbols):
                log_symbols[i, a] = np.logaddexp(log_symbols[i, a], weight)
                log_bits[i, column[i]] = np.logaddexp(log_bits[i, column[i]], weight)
    return log_symbols - logsumexp(log_symbols, axis=-1, keepdims=True), log_bits[:, 1] - log_bits[:, 0]


class qa_detector2d(unittest.TestCase):
    """Test suite for detector2d"""

    def setUp(self):
        """Set up test fixtures"""
        self.ha = ChannelMatrix.preset("HA")
        self.awgn = ChannelMatrix.preset("AWGN")
        self.rng = np.random.default_rng(11)

    def test_001_max_star(self):
        """Test the Jacobian logarithm"""
        self.assertAlmostEqual(max_star(0.0, 0.0), np.log(2.0))
        self.assertEqual(max_star(-np.inf, 3.0), 3.0)
        self.assertAlmostEqual(max_star(1.0, 2.0), np.log(np.e + np.e**2))
        self.assertEqual(max_star(-np.inf, -np.inf), -np.inf)
        values = np.array([[0.5, -1.0, 2.0], [-np.inf, -np.inf, -np.inf]])
        reduced = max_star_reduce(values, axis=-1)
        self.assertAlmostEqual(reduced[0], np.log(np.sum(np.exp(values[0]))))
        self.assertEqual(reduced[1], -np.inf)

    def test_002_symbol_alphabet(self):
        """Test symbol indexing by binary expansion"""
        alphabet = SymbolAlphabet(3)
        self.assertEqual(alphabet.size, 8)
        self.assertEqual(alphabet.index_of([-1, -1, -1]), 0)
        self.assertEqual(alphabet.index_of([1, -1, 1]), 5)
        self.assertEqual(alphabet.symbol_of(5), (1, -1, 1))
        with self.assertRaises(IndexError):
            alphabet.symbol_of(8)

    def test_003_trellis_tables(self):
        """Test trellis sizes and branch outputs for the 3x3 channel"""
        trellis = TrellisSpec(self.ha)
        self.assertEqual(trellis.n_symbols, 8)
        self.assertEqual(trellis.n_down_states, 64)
        self.assertEqual(trellis.n_cross_states, 4)
        self.assertEqual(len(trellis.down_successors(0)), 8)
        for state in range(trellis.n_cross_states):
            self.assertEqual(len(trellis.cross_successors(state)), 2)
        self.assertAlmostEqual(trellis.down_output[0, 0], -2.104696)
        self.assertAlmostEqual(trellis.down_output[0, 1], -2.104696 + 2.0 * H_A[0, 0])

    def test_004_bit_to_symbol(self):
        """Test symbol priors from bit priors with the top guard"""
        p_plus = np.array([[0.8], [0.3]])
        llr = np.log(p_plus / (1.0 - p_plus))
        symbols = bit_to_symbol(bit_log_priors(llr), 2, top_known=True)
        self.assertEqual(symbols.shape, (2, 1, 4))
        self.assertAlmostEqual(symbols[0, 0, 1], np.log(0.8))
        self.assertAlmostEqual(symbols[0, 0, 0], np.log(0.2))
        self.assertEqual(symbols[0, 0, 2], -np.inf)
        self.assertAlmostEqual(symbols[1, 0, 3], np.log(0.3 * 0.8))
        uniform_top = bit_to_symbol(bit_log_priors(llr), 2, top_known=False)
        self.assertAlmostEqual(uniform_top[0, 0, 2], np.log(0.2 * 0.5))

    def test_005_memoryless_channel_llr(self):
        """Test a 1x1 channel reduces to the matched-filter LLR 2 r / sigma^2"""
        sigma = 0.8
        r = self.rng.normal(size=(4, 6))
        prior = self.rng.normal(scale=2.0, size=(4, 6))
        ext = detect(r, sigma, self.awgn, prior_llr=prior, det_iterations=2)
        np.testing.assert_allclose(ext, 2.0 * r / sigma**2, rtol=1e-9, atol=1e-9)

    def test_006_noiseless_memoryless(self):
        """Test noiseless detection clamps to the sign of the bit"""
        x = random_page(self.rng, 3, 5)
        ext = detect(x.astype(float), 0.0, self.awgn)
        np.testing.assert_array_equal(ext, LLR_CLAMP * x)

    def test_007_high_snr_decisions(self):
        """Test hard decisions on a 2D page at high SNR"""
        x = random_page(self.rng, 16, 16)
        r = convolve2d(BipolarGrid(x), self.ha) + 0.1 * self.rng.standard_normal((16, 16))
        ext = detect(r, 0.1, self.ha)
        errors = int(np.sum(np.where(ext[:-1, :-1] > 0, 1, -1) != x[:-1, :-1]))
        self.assertLessEqual(errors, 2)

    def test_008_prior_feedback(self):
        """Test strong correct priors give correct posteriors"""
        x = random_page(self.rng, 6, 6)
        r = convolve2d(BipolarGrid(x), self.ha) + 0.6 * self.rng.standard_normal((6, 6))
        ext = detect(r, 0.6, self.ha, prior_llr=np.zeros((6, 6)))
        self.assertTrue(np.all(np.isfinite(ext)))
        posterior = detect(r, 0.6, self.ha, prior_llr=8.0 * x) + 8.0 * x
        self.assertTrue(np.all(np.sign(posterior) == x))

    def test_009_batch_matches_single(self):
        """Test batched pages match one-at-a-time detection"""
        pages = np.stack([convolve2d(BipolarGrid(random_page(self.rng, 5, 7)), self.ha) for _ in range(3)])
        pages += 0.5 * self.rng.standard_normal(pages.shape)
        priors = self.rng.normal(size=pages.shape)
        batched = detect_batch(pages, 0.5, self.ha, priors, det_iterations=2)
        for page, prior, ext in zip(pages, priors, batched):
            np.testing.assert_allclose(ext, detect(page, 0.5, self.ha, prior, det_iterations=2), atol=1e-9)

    def test_010_cross_first_schedule(self):
        """Test a leading cross-track pass with flat input leaves the result unchanged"""
        r = convolve2d(BipolarGrid(random_page(self.rng, 6, 8)), self.ha) + 0.5 * self.rng.standard_normal((6, 8))
        prior = self.rng.normal(size=(6, 8))
        down_first = detect(r, 0.5, self.ha, prior, schedule="down-first")
        cross_first = detect(r, 0.5, self.ha, prior, schedule="cross-first")
        np.testing.assert_allclose(cross_first, down_first, rtol=1e-7, atol=1e-7)

    def test_011_window_covering_page(self):
        """Test windows that cover the whole page reproduce full-page detection"""
        r = convolve2d(BipolarGrid(random_page(self.rng, 6, 8)), self.ha) + 0.5 * self.rng.standard_normal((6, 8))
        prior = self.rng.normal(size=(6, 8))
        full = detect(r, 0.5, self.ha, prior, det_iterations=2)
        windowed = detect_windowed(r, 0.5, self.ha, prior, f_c=6, f_d=8, det_iterations=2, chunk=7)
        np.testing.assert_allclose(windowed, full, atol=1e-8)

    def test_012_small_windows(self):
        """Test small windows still decide correctly at high SNR"""
        x = random_page(self.rng, 10, 10)
        r = convolve2d(BipolarGrid(x), self.ha) + 0.1 * self.rng.standard_normal((10, 10))
        ext = detect_windowed(r, 0.1, self.ha, f_c=2, f_d=2)
        self.assertEqual(ext.shape, (10, 10))
        errors = int(np.sum(np.where(ext[:-1, :-1] > 0, 1, -1) != x[:-1, :-1]))
        self.assertLessEqual(errors, 2)

    def test_013_input_validation(self):
        """Test shape and parameter errors"""
        r = np.zeros((4, 4))
        with self.assertRaises(DimensionError):
            detect(r, 0.5, self.ha, prior_llr=np.zeros((4, 5)))
        with self.assertRaises(DimensionError):
            detect(np.zeros(4), 0.5, self.ha)
        with self.assertRaises(ValueError):
            detect(r, 0.5, self.ha, det_iterations=0)
        with self.assertRaises(ValueError):
            detect(r, 0.5, self.ha, schedule="diagonal")
        with self.assertRaises(ValueError):
            detect_windowed(r, 0.5, self.ha, f_c=0)

    def test_014_down_track_exhaustive(self):
        """Test down-track posteriors against enumeration of every row"""
        channels = [
            ChannelMatrix(np.array([[1.0]])),
            ChannelMatrix(np.array([[1.0, 0.6]])),
            ChannelMatrix(np.array([[1.0, 0.5, -0.3]])),
            ChannelMatrix(np.array([[1.0, 0.4], [0.5, 0.2]])),
        ]
        for channel in channels:
            trellis = TrellisSpec(channel)
            n_cols = 5 if channel.m_h == 1 else 3
            r = self.rng.normal(size=n_cols)
            l_id = self.rng.normal(size=(n_cols, trellis.n_symbols))
            for left_known in (True, False):
                l_od, l_ic = down_track_bcjr(r, 0.7, trellis, l_id, left_known=left_known)
                expected = exhaustive_down_track(r, 0.7, channel, l_id, left_known=left_known)
                np.testing.assert_allclose(l_od, expected, atol=1e-10)
                np.testing.assert_allclose(logsumexp(l_od, axis=-1), 0.0, atol=1e-12)
                np.testing.assert_allclose(l_ic, l_od - l_id, atol=1e-12)

    def test_015_cross_track_exhaustive(self):
        """Test cross-track posteriors against enumeration of every column"""
        for m_h in (1, 2, 3):
            trellis = TrellisSpec(ChannelMatrix(np.ones((m_h, 1))))
            l_ic = self.rng.normal(size=(4, trellis.n_symbols))
            bit_priors = bit_log_priors(self.rng.normal(scale=1.5, size=4))
            for top_known in (True, False):
                l_oc_symbol, l_oc_bit = cross_track_bcjr(l_ic, bit_priors, trellis, top_known=top_known)
                symbols, bits = exhaustive_cross_track(l_ic, bit_priors, m_h, top_known=top_known)
                np.testing.assert_allclose(l_oc_symbol, symbols, atol=1e-10)
                np.testing.assert_allclose(l_oc_bit, bits, atol=1e-10)
                np.testing.assert_allclose(logsumexp(l_oc_symbol, axis=-1), 0.0, atol=1e-12)

    def test_016_guard_band_symbols(self):
        """Test symbols reaching above a known top edge get zero probability"""
        trellis = TrellisSpec(self.ha)
        alphabet = trellis.alphabet
        l_ic = self.rng.normal(size=(4, trellis.n_symbols))
        bit_priors = bit_log_priors(self.rng.normal(size=4))
        l_oc_symbol, _ = cross_track_bcjr(l_ic, bit_priors, trellis, top_known=True)
        above = alphabet.bits[:, 1:].any(axis=1)
        self.assertTrue(np.all(np.isneginf(l_oc_symbol[0, above])))
        self.assertTrue(np.all(np.isfinite(l_oc_symbol[0, ~above])))
        self.assertTrue(np.all(np.isneginf(l_oc_symbol[1, alphabet.bits[:, 2] == 1])))
        free, _ = cross_track_bcjr(l_ic, bit_priors, trellis, top_known=False)
        self.assertTrue(np.all(np.isfinite(free)))

    def test_017_detector_output_is_extrinsic(self):
        """Test one-row channels give the exact posterior minus the decoder prior"""
        channel = ChannelMatrix(np.array([[1.0, 0.5, -0.3]]))
        x = random_page(self.rng, 3, 5)
        r = convolve2d(BipolarGrid(x), channel) + 0.7 * self.rng.standard_normal((3, 5))
        prior = self.rng.normal(scale=2.0, size=(3, 5))
        ext = detect(r, 0.7, channel, prior_llr=prior, det_iterations=2)
        for i in range(3):
            posterior = exhaustive_down_track(r[i], 0.7, channel, bit_log_priors(prior[i]))
            np.testing.assert_allclose(ext[i], posterior[:, 1] - posterior[:, 0] - prior[i], atol=1e-9)


if __name__ == "__main__":
    unittest.main()
