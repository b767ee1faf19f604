#!/usr/bin/env python3
"""
Unit tests for the sum-product LDPC decoder
"""

import os
import sys
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

# Prefer the installed gr_jidds; fallback to local python
try:
    import gr_jidds  # noqa: F401
except ImportError:
    sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "python"))

from gr_jidds.exceptions import DimensionError
from gr_jidds.ldpc_code import CosetLdpcCode, ParityCheckMatrix, construct_regular_code, random_coset
from gr_jidds.spa_decoder import MessageStore, SpaDecoder, decode, phi


class qa_spa_decoder(unittest.TestCase):
    """Test suite for spa_decoder"""

    def setUp(self):
        """Set up test fixtures"""
        self.rng = np.random.default_rng(21)
        pcm = construct_regular_code(204, 3, 6, girth_min=6, seed=4)
        self.pcm = pcm
        self.code = CosetLdpcCode.from_pcm(pcm, coset=random_coset(pcm.n_cols, self.rng))
        self.plain = CosetLdpcCode.from_pcm(pcm)

    def codeword_llr(self, code, magnitude=4.0):
        u = self.rng.integers(0, 2, code.k)
        s = code.encode(u)
        return s, magnitude * (2.0 * s - 1.0)

    def test_001_phi_self_inverse(self):
        """Test phi(phi(x)) = x"""
        for x in (0.2, 1.0, 3.0, 7.5):
            self.assertAlmostEqual(float(phi(phi(x))), x, places=9)
        self.assertTrue(np.isfinite(phi(0.0)))

    def test_002_check_rule(self):
        """Test leave-one-out check messages and the coset sign flip"""
        pcm = ParityCheckMatrix.from_dense([[1, 1, 1]])
        z = np.array([0.7, 1.0, -2.0])
        expected = np.array(
            [
                2.0 * np.arctanh(np.tanh(z[1] / 2) * np.tanh(z[2] / 2)),
                2.0 * np.arctanh(np.tanh(z[0] / 2) * np.tanh(z[2] / 2)),
                2.0 * np.arctanh(np.tanh(z[0] / 2) * np.tanh(z[1] / 2)),
            ]
        )
        for d, sign in ((0, 1.0), (1, -1.0)):
            decoder = SpaDecoder(pcm, np.array([d], dtype=np.uint8))
            store = MessageStore.fresh(pcm, np.zeros(3))
            store.z[:] = z
            decoder.check_update(store)
            np.testing.assert_allclose(store.q, sign * expected, atol=1e-10)
            store.q[:] = 0.0
            decoder.check_update(store, m=0, d_m=d)
            np.testing.assert_allclose(store.q, sign * expected, atol=1e-10)

    def test_003_variable_rule(self):
        """Test variable messages exclude the destination check"""
        pcm = ParityCheckMatrix.from_dense([[1, 1], [1, 0], [1, 1]])
        decoder = SpaDecoder(pcm)
        store = MessageStore.fresh(pcm, np.array([0.5, -1.0]))
        store.q[:] = np.arange(1.0, pcm.n_edges + 1.0)
        decoder.variable_update(store)
        var0 = np.flatnonzero(pcm.edge_vars == 0)
        total0 = 0.5 + store.q[var0].sum()
        np.testing.assert_allclose(store.z[var0], total0 - store.q[var0])
        before = store.z.copy()
        decoder.variable_update(store, n=1)
        np.testing.assert_allclose(store.z, before)

    def test_004_clean_codeword(self):
        """Test a clean codeword is returned unchanged"""
        s, llr = self.codeword_llr(self.plain)
        result = decode(llr, self.plain, iterations=5)
        np.testing.assert_array_equal(result.hard, s)
        self.assertTrue(result.converged)
        self.assertEqual(result.iterations, 5)
        np.testing.assert_allclose(result.llr, llr + result.extrinsic)

    def test_005_coset_codeword(self):
        """Test coset words decode with the coset syndrome"""
        s, llr = self.codeword_llr(self.code)
        result = SpaDecoder.for_code(self.code).decode(llr, iterations=5)
        np.testing.assert_array_equal(result.hard, s)
        self.assertTrue(result.converged)
        self.assertTrue(np.all(np.sign(result.extrinsic) == np.sign(llr)))

    def test_006_corrects_errors(self):
        """Test a few weak wrong inputs are corrected"""
        s, llr = self.codeword_llr(self.code, magnitude=3.0)
        for idx in (3, 77, 150):
            llr[idx] = -0.8 * llr[idx] / 3.0
        result = decode(llr, self.code, iterations=20)
        np.testing.assert_array_equal(result.hard, s)
        self.assertTrue(result.converged)

    def test_007_early_exit(self):
        """Test early exit stops after the first satisfied syndrome"""
        s, llr = self.codeword_llr(self.code)
        result = decode(llr, self.code, iterations=50, early_exit=True)
        self.assertEqual(result.iterations, 1)
        self.assertTrue(result.converged)
        np.testing.assert_array_equal(result.hard, s)

    def test_008_noise_only(self):
        """Test pure noise input does not report convergence"""
        llr = self.rng.normal(scale=0.2, size=self.code.n)
        result = decode(llr, self.code, iterations=3)
        self.assertFalse(result.converged)

    def test_009_exact_on_tree(self):
        """Test posteriors on a cycle-free graph match brute-force marginals"""
        h = np.array(
            [
                [1, 1, 1, 0, 0, 0, 0],
                [0, 0, 1, 1, 1, 0, 0],
                [0, 0, 0, 0, 1, 1, 1],
            ]
        )
        d = np.array([1, 0, 1], dtype=np.uint8)
        llr = self.rng.normal(scale=2.0, size=7)
        words = (np.arange(128)[:, None] >> np.arange(7)[None, :]) & 1
        words = words[np.all((words @ h.T) % 2 == d, axis=1)]
        log_weight = 0.5 * (2 * words - 1) @ llr
        expected = np.array(
            [
                np.logaddexp.reduce(log_weight[words[:, n] == 1]) - np.logaddexp.reduce(log_weight[words[:, n] == 0])
                for n in range(7)
            ]
        )
        result = SpaDecoder(ParityCheckMatrix.from_dense(h), d).decode(llr, iterations=10)
        np.testing.assert_allclose(result.llr, expected, atol=1e-6)

    def test_010_input_validation(self):
        """Test length and iteration errors"""
        with self.assertRaises(ValueError):
            decode(np.zeros(self.code.n), self.code, iterations=0)
        with self.assertRaises(DimensionError):
            decode(np.zeros(self.code.n - 1), self.code, iterations=1)
        with self.assertRaises(DimensionError):
            SpaDecoder(self.code.pcm, np.zeros(3, dtype=np.uint8))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(min_value=0.5, max_value=1.1))
    def test_011_coset_equivariance(self, seed, sigma):
        """Test a coset word decodes to the same error pattern as the all-zero word of the plain code"""
        rng = np.random.default_rng(seed)
        code = CosetLdpcCode.from_pcm(self.pcm, coset=random_coset(self.pcm.n_cols, rng))
        s = code.encode(rng.integers(0, 2, code.k))
        x = 2.0 * s - 1.0
        llr = 2.0 * (x + sigma * rng.standard_normal(code.n)) / sigma**2
        coset_result = decode(llr, code, iterations=20)
        plain_result = decode(-llr * x, self.plain, iterations=20)
        np.testing.assert_allclose(coset_result.llr * x, -plain_result.llr, atol=1e-9)
        np.testing.assert_array_equal(coset_result.hard ^ s, plain_result.hard)
        self.assertEqual(coset_result.converged, plain_result.converged)


if __name__ == "__main__":
    unittest.main()
