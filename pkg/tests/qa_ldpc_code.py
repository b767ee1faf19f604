#!/usr/bin/env python3
"""
Unit tests for coset LDPC code construction, generator derivation and alist I/O
"""

import os
import sys
import tempfile
import unittest

import numpy as np

# Prefer the installed gr_jidds; fallback to local python
try:
    import gr_jidds  # noqa: F401
except ImportError:
    sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "python"))

from gr_jidds.exceptions import AlistFormatError, CodeConstructionError, RankDeficientError
from gr_jidds.ldpc_code import (
    CosetLdpcCode,
    DegreeDistribution,
    ParityCheckMatrix,
    code_from_spec,
    construct_regular_code,
    derive_generator,
    encode,
    load_alist,
    load_code,
    parse_code_params,
    random_coset,
    save_alist,
    syndrome,
)

HAMMING_H = np.array(
    [
        [1, 0, 1, 0, 1, 0, 1],
        [0, 1, 1, 0, 0, 1, 1],
        [0, 0, 0, 1, 1, 1, 1],
    ]
)


class qa_ldpc_code(unittest.TestCase):
    """Test suite for ldpc_code"""

    def setUp(self):
        """Set up test fixtures"""
        self.tmpdir = tempfile.TemporaryDirectory()
        self.pcm = construct_regular_code(204, 3, 6, girth_min=6, seed=1)

    def tearDown(self):
        """Clean up after tests"""
        self.tmpdir.cleanup()

    def test_001_regular_distribution(self):
        """Test regular degree distribution rate and node fractions"""
        dist = DegreeDistribution.regular(3, 6)
        self.assertAlmostEqual(dist.design_rate, 0.5)
        self.assertEqual(dist.node_fractions(), ((3, 1.0),))
        self.assertEqual(dist.d_v_max, 3)
        self.assertEqual(dist.d_c_max, 6)

    def test_002_irregular_node_fractions(self):
        """Test node-perspective fractions of an irregular distribution"""
        dist = DegreeDistribution(lam=((2, 0.5), (4, 0.5)), rho=((6, 1.0),))
        fractions = dict(dist.node_fractions())
        self.assertAlmostEqual(fractions[2], 2.0 / 3.0)
        self.assertAlmostEqual(fractions[4], 1.0 / 3.0)

    def test_003_invalid_distribution(self):
        """Test fractions that do not sum to one are rejected"""
        with self.assertRaises(ValueError):
            DegreeDistribution(lam=((3, 0.9),), rho=((6, 1.0),))
        with self.assertRaises(ValueError):
            DegreeDistribution(lam=((3, 1.0),), rho=((1, 1.0),))

    def test_004_regular_construction_weights(self):
        """Test constructed matrix has the requested row and column weights"""
        self.assertEqual((self.pcm.n_rows, self.pcm.n_cols), (102, 204))
        self.assertTrue(np.all(self.pcm.row_weights == 6))
        self.assertTrue(np.all(self.pcm.col_weights == 3))
        self.assertEqual(self.pcm.n_edges, 612)

    def test_005_no_four_cycles(self):
        """Test girth 6 construction has no 4-cycles"""
        self.assertFalse(self.pcm.has_four_cycle())
        dense = self.pcm.to_dense().astype(np.int64)
        overlap = dense.T @ dense
        np.fill_diagonal(overlap, 0)
        self.assertLessEqual(int(overlap.max()), 1)

    def test_006_construction_deterministic(self):
        """Test the same seed gives the same matrix"""
        again = construct_regular_code(204, 3, 6, girth_min=6, seed=1)
        self.assertEqual(self.pcm, again)
        other = construct_regular_code(204, 3, 6, girth_min=6, seed=2)
        self.assertNotEqual(self.pcm, other)

    def test_007_construction_divisibility(self):
        """Test N*d_v not divisible by d_c is rejected"""
        with self.assertRaises(CodeConstructionError):
            construct_regular_code(10, 3, 4)

    def test_008_degree_distribution_from_matrix(self):
        """Test measured distribution of a regular matrix"""
        self.assertEqual(DegreeDistribution.from_pcm(self.pcm), DegreeDistribution.regular(3, 6))

    def test_009_hamming_generator(self):
        """Test generator of the Hamming matrix is orthogonal to H"""
        pcm = ParityCheckMatrix.from_dense(HAMMING_H)
        derived = derive_generator(pcm)
        self.assertEqual(derived.rank, 3)
        self.assertEqual(derived.effective_dimension, 4)
        product = derived.generator.astype(np.int64) @ HAMMING_H.T % 2
        self.assertFalse(product.any())
        systematic = derived.generator[:, derived.column_permutation[3:]]
        np.testing.assert_array_equal(systematic, np.eye(4, dtype=np.uint8))

    def test_010_rank_deficient_matrix(self):
        """Test even column weight matrices report their effective dimension"""
        pcm = construct_regular_code(64, 4, 8, girth_min=4, seed=3)
        derived = derive_generator(pcm)
        self.assertLess(derived.rank, pcm.n_rows)
        self.assertEqual(derived.effective_dimension, pcm.n_cols - derived.rank)
        with self.assertRaises(RankDeficientError) as ctx:
            derive_generator(pcm, strict=True)
        self.assertEqual(ctx.exception.effective_dimension, derived.effective_dimension)

    def test_011_codewords_satisfy_parity(self):
        """Test encoded words satisfy H s^T = 0 for the zero coset"""
        code = CosetLdpcCode.from_pcm(self.pcm)
        rng = np.random.default_rng(5)
        for _ in range(5):
            u = rng.integers(0, 2, code.k)
            s = encode(code, u)
            self.assertFalse(syndrome(self.pcm, s).any())

    def test_012_coset_codewords(self):
        """Test coset words satisfy H s^T = d and decode back to u"""
        rng = np.random.default_rng(6)
        code = CosetLdpcCode.from_pcm(self.pcm, coset=random_coset(self.pcm.n_cols, rng))
        u = rng.integers(0, 2, code.k).astype(np.uint8)
        s = code.encode(u)
        np.testing.assert_array_equal(syndrome(self.pcm, s), code.syndrome_vector)
        np.testing.assert_array_equal(code.extract_info(s), u)
        self.assertEqual(code.info_positions.size, code.k)

    def test_013_alist_round_trip(self):
        """Test alist save and load reproduce the matrix"""
        path = os.path.join(self.tmpdir.name, "code.alist")
        save_alist(self.pcm, path)
        self.assertEqual(load_alist(path), self.pcm)

    def test_014_alist_zero_padding(self):
        """Test zero-padded adjacency lists are accepted"""
        path = os.path.join(self.tmpdir.name, "padded.alist")
        with open(path, "w") as f:
            f.write("4 2\n2 3\n1 2 1 2\n3 3\n1 0\n1 2\n2 0\n1 2\n1 2 4\n2 3 4\n")
        pcm = load_alist(path)
        expected = np.array([[1, 1, 0, 1], [0, 1, 1, 1]], dtype=np.uint8)
        np.testing.assert_array_equal(pcm.to_dense(), expected)

    def test_015_alist_malformed(self):
        """Test inconsistent alist files are rejected"""
        path = os.path.join(self.tmpdir.name, "bad.alist")
        with open(path, "w") as f:
            f.write("4 2\n2 3\n1 2 1 2\n3 3\n1\n1 2\n2\n1 2\n1 2 3\n2 3 4\n")
        with self.assertRaises(AlistFormatError):
            load_alist(path)
        with open(path, "w") as f:
            f.write("4 2\n")
        with self.assertRaises(AlistFormatError):
            load_alist(path)

    def test_016_load_code_single_source(self):
        """Test load_code needs exactly one code source"""
        with self.assertRaises(ValueError):
            load_code()
        with self.assertRaises(ValueError):
            load_code(alist_path="x.alist", params=(96, 3, 6))

    def test_017_code_spec_parsing(self):
        """Test N,DV,DC specs are told apart from alist paths"""
        self.assertEqual(parse_code_params("96,3,6"), (96, 3, 6))
        self.assertEqual(parse_code_params(" 96 , 3 , 6 "), (96, 3, 6))
        self.assertIsNone(parse_code_params("codes/96.3.6.alist"))
        code = code_from_spec("96,3,6", girth_min=4, seed=2, coset="random")
        self.assertEqual(code.n, 96)
        self.assertTrue(code.coset.any())


if __name__ == "__main__":
    unittest.main()
