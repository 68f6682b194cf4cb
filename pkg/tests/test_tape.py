"""Tests for `graph_surgeon` tape module."""

import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from graph_surgeon.exceptions import NumericalError, ShapeError
from graph_surgeon.graph import build_graph, normalize_adjacency
from graph_surgeon.tape import AllocationMeter, Tape


class TestForwardOps(unittest.TestCase):
    """Tests for forward values of the op vocabulary."""

    def setUp(self):
        """Set up test fixtures."""
        self.tape = Tape()
        self.rng = np.random.default_rng(0)

    def test_matmul(self):
        """Test matrix product and shape checking."""
        a = self.tape.leaf(np.array([[1.0, 2.0]]))
        b = self.tape.leaf(np.array([[3.0], [4.0]]))
        self.assertEqual(self.tape.matmul(a, b).item(), 11.0)
        with self.assertRaises(ShapeError) as ctx:
            self.tape.matmul(a, a)
        self.assertEqual(ctx.exception.op, "matmul")

    def test_add_row_broadcast(self):
        """Test adding a single row to every row."""
        a = self.tape.leaf(np.zeros((3, 2)))
        b = self.tape.leaf(np.array([1.0, 2.0]))
        assert_array_equal(self.tape.add(a, b).values, [[1, 2], [1, 2], [1, 2]])
        with self.assertRaises(ShapeError):
            self.tape.add(a, self.tape.leaf(np.zeros((2, 2))))

    def test_row_l2_normalize(self):
        """Test unit rows and the zero-row clamp."""
        x = self.tape.leaf(np.array([[3.0, 4.0], [0.0, 0.0]]))
        y = self.tape.row_l2_normalize(x).values
        assert_allclose(y, [[0.6, 0.8], [0.0, 0.0]])
        self.assertTrue(np.isfinite(y).all())

    def test_dropout_scaling(self):
        """Test inverted dropout with an explicit mask."""
        x = self.tape.leaf(np.ones((2, 2)))
        y = self.tape.dropout(x, 0.5, mask=np.array([[1, 0], [0, 1]]))
        assert_array_equal(y.values, [[2, 0], [0, 2]])

    def test_dropout_probability_range(self):
        """Test that p outside [0, 1) is rejected."""
        x = self.tape.leaf(np.ones((2, 2)))
        with self.assertRaises(ShapeError):
            self.tape.dropout(x, 1.0, self.rng)

    def test_gram_and_frobenius(self):
        """Test Gram matrices, identity subtraction and the Frobenius norm."""
        z = self.tape.leaf(np.eye(3)[:2])
        rows = self.tape.gram_rows(z)
        self.assertEqual(self.tape.frob_norm(self.tape.sub_identity(rows)).item(), 0.0)
        cols = self.tape.gram_cols(z)
        self.assertEqual(cols.shape, (3, 3))
        self.assertEqual(self.tape.frob_norm(self.tape.sub_identity(cols)).item(), 1.0)

    def test_sub_identity_requires_square(self):
        """Test that sub_identity rejects non-square input."""
        with self.assertRaises(ShapeError):
            self.tape.sub_identity(self.tape.leaf(np.zeros((2, 3))))

    def test_leaf_rejects_non_finite(self):
        """Test that non-finite inputs are rejected."""
        with self.assertRaises(NumericalError):
            self.tape.leaf(np.array([[np.nan]]))

    def test_operands_from_other_tape(self):
        """Test that mixing tapes raises."""
        other = Tape().leaf(np.ones((1, 1)))
        with self.assertRaises(ShapeError):
            self.tape.relu(other)


class TestBackward(unittest.TestCase):
    """Tests for gradients of the op vocabulary."""

    def test_sum_of_squares(self):
        """Test d/dx of ||x||_F^2 through frob_norm and scale."""
        tape = Tape()
        x = tape.leaf(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True)
        norm = tape.frob_norm(x)
        tape.backward(norm)
        assert_allclose(x.grad, x.values / np.sqrt(30.0))

    def test_frob_norm_at_zero(self):
        """Test that the Frobenius norm of zero yields a zero gradient."""
        tape = Tape()
        m = tape.leaf(np.zeros((2, 2)), requires_grad=True)
        tape.backward(tape.frob_norm(m))
        assert_array_equal(m.grad, np.zeros((2, 2)))

    def test_mse_mean(self):
        """Test the gradient of the mean squared error."""
        tape = Tape()
        a = tape.leaf(np.array([[1.0, 3.0]]), requires_grad=True)
        b = tape.leaf(np.array([[0.0, 1.0]]), requires_grad=True)
        loss = tape.mse_mean(a, b)
        self.assertEqual(loss.item(), 2.5)
        tape.backward(loss)
        assert_allclose(a.grad, [[1.0, 2.0]])
        assert_allclose(b.grad, [[-1.0, -2.0]])

    def test_shared_input_accumulates(self):
        """Test that a leaf used twice sums its gradient contributions."""
        tape = Tape()
        x = tape.leaf(np.array([[2.0]]), requires_grad=True)
        y = tape.matmul(x, x)
        tape.backward(y)
        assert_allclose(x.grad, [[4.0]])

    def test_broadcast_add_gradient(self):
        """Test that the broadcast row receives the column sums."""
        tape = Tape()
        a = tape.leaf(np.ones((3, 2)), requires_grad=True)
        b = tape.leaf(np.zeros((1, 2)), requires_grad=True)
        target = tape.leaf(np.zeros((3, 2)))
        tape.backward(tape.mse_mean(tape.add(a, b), target))
        assert_allclose(b.grad, [[1.0, 1.0]])

    def test_no_gradient_for_constants(self):
        """Test that leaves without requires_grad get no gradient."""
        tape = Tape()
        x = tape.leaf(np.ones((2, 2)))
        w = tape.leaf(np.ones((2, 1)), requires_grad=True)
        grads = tape.backward(tape.frob_norm(tape.matmul(x, w)))
        self.assertIn(w.node_id, grads)
        self.assertNotIn(x.node_id, grads)
        self.assertIsNone(x.grad)

    def test_spmm_const_gradient(self):
        """Test that the constant operator's transpose carries the gradient."""
        adj = normalize_adjacency(build_graph([(0, 1), (1, 2)], 3))
        tape = Tape()
        x = tape.leaf(np.eye(3), requires_grad=True)
        y = tape.spmm_const(adj, x)
        tape.backward(tape.frob_norm(y))
        dense = adj.to_dense()
        product = dense @ np.eye(3)
        assert_allclose(x.grad, dense.T @ (product / np.linalg.norm(product)), rtol=1e-10)

    def test_backward_requires_scalar(self):
        """Test that backward rejects non-scalar losses."""
        tape = Tape()
        x = tape.leaf(np.ones((2, 2)), requires_grad=True)
        with self.assertRaises(ShapeError):
            tape.backward(x)

    def test_param_memoized_per_tape(self):
        """Test that param returns the same leaf for the same name."""
        tape = Tape()
        w = np.ones((2, 2))
        self.assertIs(tape.param("w", w).node_id, tape.param("w", w).node_id)
        self.assertEqual(len(tape.params()), 1)


class TestAccounting(unittest.TestCase):
    """Tests for allocation accounting and op counts."""

    def test_meter_peak_and_largest(self):
        """Test high-water mark and per-kind maxima."""
        meter = AllocationMeter()
        meter.allocate(100, "a")
        meter.allocate(50, "b")
        meter.release(100)
        meter.allocate(20, "a")
        self.assertEqual(meter.peak_bytes, 150)
        self.assertEqual(meter.largest("a"), 100)
        self.assertEqual(meter.largest("a", "b"), 100)
        self.assertEqual(meter.largest("missing"), 0)

    def test_gram_buffer_sizes(self):
        """Test that row Grams scale with rows and column Grams with columns."""
        z = np.random.default_rng(0).standard_normal((50, 4))
        tape = Tape()
        tape.gram_rows(tape.leaf(z))
        self.assertEqual(tape.meter.largest("gram_rows"), 50 * 50 * 8)
        tape = Tape()
        tape.gram_cols(tape.leaf(z))
        self.assertEqual(tape.meter.largest("gram_cols"), 4 * 4 * 8)

    def test_op_counts(self):
        """Test that recorded ops are counted per kind."""
        tape = Tape()
        x = tape.leaf(np.ones((2, 2)))
        tape.relu(tape.relu(x))
        self.assertEqual(tape.op_counts["relu"], 2)
        self.assertEqual(tape.op_counts["leaf"], 1)


if __name__ == '__main__':
    unittest.main()
