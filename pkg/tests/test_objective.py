"""Tests for `graph_surgeon` objective module."""

import unittest

import numpy as np
from numpy.testing import assert_allclose

from graph_surgeon.exceptions import ConfigError, ShapeError
from graph_surgeon.objective import (
    ConstraintMode,
    LossConfig,
    Reduction,
    constraint_term,
    invariance_term,
    total_loss,
    unit_rows,
)
from graph_surgeon.tape import Tape


def unit(rng, rows, cols):
    z = rng.standard_normal((rows, cols))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


class TestUnitRows(unittest.TestCase):
    """Tests for row normalization."""

    def test_random_rows_have_unit_norm(self):
        """Test that all rows of a random matrix end with norm one."""
        tape = Tape()
        z = unit_rows(tape, tape.leaf(np.random.default_rng(0).standard_normal((8, 5))))
        assert_allclose(np.linalg.norm(z.values, axis=1), np.ones(8), rtol=1e-6)

    def test_zero_row_stays_zero(self):
        """Test the degenerate-row clamp."""
        tape = Tape()
        z = unit_rows(tape, tape.leaf(np.zeros((2, 3))))
        assert_allclose(z.values, np.zeros((2, 3)))


class TestInvariance(unittest.TestCase):
    """Tests for the invariance term."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(1)

    def test_identical_views(self):
        """Test that equal views give zero."""
        z = unit(self.rng, 6, 4)
        tape = Tape()
        self.assertEqual(invariance_term(tape, tape.leaf(z), tape.leaf(z)).item(), 0.0)

    def test_antipodal_views(self):
        """Test that opposite unit rows give 4 / F under the mean reduction."""
        for width in (2, 5, 16):
            z = unit(self.rng, 7, width)
            tape = Tape()
            term = invariance_term(tape, tape.leaf(z), tape.leaf(-z))
            self.assertAlmostEqual(term.item(), 4.0 / width, places=12)

    def test_sum_reduction(self):
        """Test that the sum reduction scales the mean by the element count."""
        z = unit(self.rng, 7, 3)
        tape = Tape()
        term = invariance_term(tape, tape.leaf(z), tape.leaf(-z), Reduction.SUM)
        self.assertAlmostEqual(term.item(), 4.0 * 7, places=10)

    def test_matches_cosine_identity(self):
        """Test that the squared distance of unit rows equals 2 - 2 cos."""
        z1, z2 = unit(self.rng, 9, 4), unit(self.rng, 9, 4)
        tape = Tape()
        term = invariance_term(tape, tape.leaf(z1), tape.leaf(z2), Reduction.SUM)
        cosines = np.sum(z1 * z2, axis=1)
        self.assertAlmostEqual(term.item(), np.sum(2.0 - 2.0 * cosines), places=10)

    def test_shape_mismatch(self):
        """Test that views must have equal shapes."""
        tape = Tape()
        with self.assertRaises(ShapeError):
            invariance_term(tape, tape.leaf(np.ones((2, 2))), tape.leaf(np.ones((3, 2))))


class TestConstraint(unittest.TestCase):
    """Tests for the orthogonality constraint."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(2)

    def test_orthonormal_rows(self):
        """Test that identity rows satisfy the row constraint exactly."""
        tape = Tape()
        term = constraint_term(tape, tape.leaf(np.eye(4)[:3]), ConstraintMode.ROW)
        self.assertEqual(term.item(), 0.0)

    def test_total_collapse(self):
        """Test that B copies of one unit row give sqrt(B^2 - B)."""
        row = unit(self.rng, 1, 6)
        for batch in (2, 5, 10):
            tape = Tape()
            z = tape.leaf(np.repeat(row, batch, axis=0))
            term = constraint_term(tape, z, ConstraintMode.ROW)
            self.assertAlmostEqual(term.item(), np.sqrt(batch * batch - batch), places=10)

    def test_dense_oracle_both_modes(self):
        """Test both Gram orientations against dense computations."""
        z = unit(self.rng, 6, 4)
        expected = {
            ConstraintMode.ROW: np.linalg.norm(z @ z.T - np.eye(6)),
            ConstraintMode.COLUMN: np.linalg.norm(z.T @ z - np.eye(4)),
        }
        for mode, value in expected.items():
            tape = Tape()
            self.assertAlmostEqual(constraint_term(tape, tape.leaf(z), mode).item(), value,
                                   places=12)

    def test_row_mode_is_pairwise_cosines(self):
        """Test that the row constraint penalizes pairwise cosines of distinct rows."""
        z = unit(self.rng, 5, 3)
        cos = z @ z.T
        off_diagonal = cos[~np.eye(5, dtype=bool)]
        tape = Tape()
        term = constraint_term(tape, tape.leaf(z), ConstraintMode.ROW)
        self.assertAlmostEqual(term.item(), np.sqrt(np.sum(off_diagonal ** 2)), places=10)

    def test_permutation_invariance(self):
        """Test that reordering rows leaves both modes unchanged."""
        z = unit(self.rng, 8, 3)
        perm = self.rng.permutation(8)
        for mode in ConstraintMode:
            tape = Tape()
            a = constraint_term(tape, tape.leaf(z), mode).item()
            b = constraint_term(tape, tape.leaf(z[perm]), mode).item()
            self.assertAlmostEqual(a, b, places=10)

    def test_column_gram_memory_independent_of_batch(self):
        """Test that the column Gram buffer depends only on the width."""
        sizes = []
        for batch in (16, 256):
            tape = Tape()
            constraint_term(tape, tape.leaf(unit(self.rng, batch, 8)), ConstraintMode.COLUMN)
            sizes.append(tape.meter.largest("gram_cols"))
        self.assertEqual(sizes[0], sizes[1])
        self.assertEqual(sizes[0], 8 * 8 * 8)


class TestTotalLoss(unittest.TestCase):
    """Tests for the combined objective."""

    def test_identical_orthonormal_views(self):
        """Test the global optimum of the row-constrained loss."""
        z = np.eye(4)[:3]
        tape = Tape()
        terms = total_loss(tape, tape.leaf(z), tape.leaf(z), LossConfig(constraint_mode="row"))
        self.assertEqual(terms.total.item(), 0.0)

    def test_combines_terms(self):
        """Test that the total is invariance plus gamma times both constraints."""
        rng = np.random.default_rng(3)
        z1, z2 = unit(rng, 6, 3), unit(rng, 6, 3)
        tape = Tape()
        terms = total_loss(tape, tape.leaf(z1), tape.leaf(z2), LossConfig(gamma=0.5))
        values = terms.as_floats()
        expected = values["invariance"] + 0.5 * (values["constraint1"] + values["constraint2"])
        self.assertAlmostEqual(values["loss"], expected, places=12)
        self.assertEqual(sorted(values), ["constraint1", "constraint2", "invariance", "loss"])

    def test_zero_gamma_drops_constraints(self):
        """Test that gamma 0 leaves only the invariance term."""
        rng = np.random.default_rng(4)
        z1, z2 = unit(rng, 5, 3), unit(rng, 5, 3)
        tape = Tape()
        terms = total_loss(tape, tape.leaf(z1), tape.leaf(z2), LossConfig(gamma=0.0))
        self.assertEqual(terms.total.item(), terms.invariance.item())

    def test_config_validation(self):
        """Test that negative gamma and unknown modes are rejected."""
        with self.assertRaises(ConfigError):
            LossConfig(gamma=-1.0).validate()
        with self.assertRaises(ValueError):
            LossConfig(constraint_mode="diagonal").validate()
        config = LossConfig(constraint_mode="row", invariance_reduction="sum")
        config.validate()
        self.assertIs(config.constraint_mode, ConstraintMode.ROW)
        self.assertIs(config.invariance_reduction, Reduction.SUM)


if __name__ == '__main__':
    unittest.main()
