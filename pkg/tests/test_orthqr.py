"""Unit tests for shifted CholeskyQR and the column update."""

import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import unittest

import numpy as np

from hrom.errors import RankDeficiencyError, ShapeError
from hrom.orthqr import QRPair, cholqr_update, shifted_cholesky, shifted_cholqr

EPS = np.finfo(np.float64).eps


def reconstruction(qr, Y):
    return np.linalg.norm(qr.Q @ qr.R - Y) / np.linalg.norm(Y)


def conditioned(rows, k, cond, rng):
    U, _ = np.linalg.qr(rng.standard_normal((rows, k)))
    V, _ = np.linalg.qr(rng.standard_normal((k, k)))
    return U @ np.diag(np.logspace(0, -np.log10(cond), k)) @ V.T


class TestShiftedCholQR(unittest.TestCase):
    """Factorization of a single tall block."""

    def test_identity_block(self):
        Y = np.eye(4)
        qr = shifted_cholqr(Y)
        np.testing.assert_array_equal(qr.Q, Y)
        np.testing.assert_array_equal(qr.R, np.eye(4))
        self.assertEqual(qr.iterations, 0)

    def test_random_block(self):
        rng = np.random.default_rng(0)
        Y = rng.standard_normal((64, 8))
        qr = shifted_cholqr(Y)
        self.assertLess(qr.orthogonality(), 100 * EPS * np.sqrt(8))
        self.assertLess(reconstruction(qr, Y), 100 * EPS)
        np.testing.assert_array_equal(np.tril(qr.R, -1), 0.0)
        self.assertTrue(np.all(np.diag(qr.R) > 0))

    def test_matches_householder_r(self):
        rng = np.random.default_rng(1)
        Y = rng.standard_normal((50, 6))
        qr = shifted_cholqr(Y)
        _, R_ref = np.linalg.qr(Y)
        R_ref = R_ref * np.sign(np.diag(R_ref))[:, None]
        np.testing.assert_allclose(qr.R, R_ref, atol=1e-10 * np.linalg.norm(Y))

    def test_conditioning_sweep(self):
        rng = np.random.default_rng(2)
        for case in range(500):
            rows = int(rng.integers(20, 81))
            k = int(rng.integers(2, 11))
            cond = 10.0 ** rng.uniform(0.0, 6.0)
            Y = conditioned(rows, k, cond, rng)
            qr = shifted_cholqr(Y)
            msg = f"case {case}: {rows}x{k}, cond={cond:.3g}"
            self.assertLess(qr.orthogonality(), 100 * EPS * np.sqrt(k), msg=msg)
            self.assertLess(reconstruction(qr, Y), 1e-12, msg=msg)
            self.assertTrue(np.all(np.diag(qr.R) > 0), msg=msg)

    def test_very_ill_conditioned_sweep(self):
        rng = np.random.default_rng(12)
        Y = conditioned(80, 10, 1e8, rng)
        qr = shifted_cholqr(Y)
        self.assertLess(qr.orthogonality(), 100 * EPS * np.sqrt(10))
        self.assertLess(reconstruction(qr, Y), 1e-10)

    def test_ill_conditioned_block(self):
        rng = np.random.default_rng(3)
        Y = conditioned(64, 4, 1e12, rng)
        qr = shifted_cholqr(Y)
        self.assertLess(qr.orthogonality(), 1e-8)
        self.assertLess(reconstruction(qr, Y), 1e-8)

    def test_zero_block(self):
        with self.assertRaises(RankDeficiencyError):
            shifted_cholqr(np.zeros((10, 3)))

    def test_wide_block(self):
        with self.assertRaises(ShapeError):
            shifted_cholqr(np.ones((2, 3)))


class TestShiftedCholesky(unittest.TestCase):
    """Breakdown handling of the Gram factorization."""

    def test_positive_definite_needs_no_shift(self):
        factor, shifts = shifted_cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]), 10, EPS)
        self.assertEqual(shifts, 0)
        np.testing.assert_allclose(factor.T @ factor, [[4.0, 2.0], [2.0, 3.0]])

    def test_singular_gram_is_shifted(self):
        factor, shifts = shifted_cholesky(np.ones((2, 2)), 10, EPS)
        self.assertGreaterEqual(shifts, 1)
        self.assertTrue(np.all(np.diag(factor) > 0))

    def test_zero_gram(self):
        with self.assertRaises(RankDeficiencyError):
            shifted_cholesky(np.zeros((3, 3)), 10, EPS)


class TestCholQRUpdate(unittest.TestCase):
    """Appending column blocks to an orthonormal basis."""

    def test_unit_vector_append(self):
        qr = QRPair(np.eye(4)[:, :2], np.eye(2))
        out = cholqr_update(qr, np.eye(4)[:, 2:3])
        np.testing.assert_allclose(out.Q, np.eye(4)[:, :3], atol=1e-15)
        np.testing.assert_allclose(out.R, np.eye(3), atol=1e-15)

    def test_random_append(self):
        rng = np.random.default_rng(4)
        Y = rng.standard_normal((64, 8))
        Y_b = rng.standard_normal((64, 4))
        out = cholqr_update(shifted_cholqr(Y), Y_b)
        full = np.hstack([Y, Y_b])
        self.assertEqual(out.Q.shape, (64, 12))
        self.assertLess(out.orthogonality(), 100 * EPS * np.sqrt(12))
        self.assertLess(reconstruction(out, full), 100 * EPS)
        np.testing.assert_array_equal(np.tril(out.R, -1), 0.0)
        self.assertTrue(np.all(np.diag(out.R) > 0))

    def test_append_keeps_leading_factor(self):
        rng = np.random.default_rng(5)
        qr = shifted_cholqr(rng.standard_normal((30, 3)))
        out = cholqr_update(qr, rng.standard_normal((30, 2)))
        np.testing.assert_array_equal(out.Q[:, :3], qr.Q)
        np.testing.assert_array_equal(out.R[:3, :3], qr.R)

    def test_repeated_appends(self):
        rng = np.random.default_rng(6)
        blocks = [rng.standard_normal((100, 5)) for _ in range(6)]
        qr = shifted_cholqr(blocks[0])
        for block in blocks[1:]:
            qr = cholqr_update(qr, block)
        self.assertLess(qr.orthogonality(), 100 * EPS * np.sqrt(30))
        self.assertLess(reconstruction(qr, np.hstack(blocks)), 1e-13)

    def test_block_in_span(self):
        rng = np.random.default_rng(7)
        qr = shifted_cholqr(rng.standard_normal((64, 8)))
        with self.assertRaises(RankDeficiencyError):
            cholqr_update(qr, qr.Q @ rng.standard_normal((8, 2)))

    def test_weak_new_direction_is_kept(self):
        rng = np.random.default_rng(8)
        qr = shifted_cholqr(rng.standard_normal((4096, 32)))
        # new energy far below the Cholesky shift of the Gram matrix, far above rounding
        Y_b = qr.Q @ rng.standard_normal((32, 4)) + 1e-7 * rng.standard_normal((4096, 4))
        out = cholqr_update(qr, Y_b)
        self.assertEqual(out.Q.shape, (4096, 36))
        self.assertLess(reconstruction(out, np.hstack([qr.Q @ qr.R, Y_b])), 1e-12)
        self.assertLess(out.orthogonality(), 1e-10)
        self.assertLess(np.linalg.norm(qr.Q.T @ out.Q[:, 32:]), 1e-10)
        weak = np.diag(out.R)[32:]
        self.assertTrue(np.all(weak > 1e-7))
        self.assertTrue(np.all(weak < 1e-4))

    def test_partially_new_block(self):
        rng = np.random.default_rng(9)
        qr = shifted_cholqr(rng.standard_normal((200, 6)))
        fresh = rng.standard_normal((200, 1))
        Y_b = np.hstack([qr.Q @ rng.standard_normal((6, 1)), fresh])
        out = cholqr_update(qr, Y_b)
        self.assertLess(out.orthogonality(), 1e-7)
        self.assertLess(reconstruction(out, np.hstack([qr.Q @ qr.R, Y_b])), 1e-10)

    def test_too_many_columns(self):
        qr = QRPair(np.eye(3)[:, :2], np.eye(2))
        with self.assertRaises(ShapeError):
            cholqr_update(qr, np.ones((3, 2)))

    def test_row_mismatch(self):
        qr = QRPair(np.eye(4)[:, :2], np.eye(2))
        with self.assertRaises(ShapeError):
            cholqr_update(qr, np.ones((5, 1)))


if __name__ == "__main__":
    unittest.main()
