"""Tests for `graph_surgeon` encoder."""

import unittest

import numpy as np
from numpy.testing import assert_allclose

from graph_surgeon.exceptions import ConfigError, ShapeError
from graph_surgeon.graph import build_graph, neighbor_sample, normalize_adjacency
from graph_surgeon.layers import EncoderParams, encode
from graph_surgeon.tape import Tape


def random_graph(num_nodes, num_edges, seed):
    rng = np.random.default_rng(seed)
    return build_graph(rng.integers(0, num_nodes, size=(num_edges, 2)), num_nodes)


def run(propagation, h0, params, train_mode=False, rng=None):
    tape = Tape()
    return encode(tape, propagation, tape.leaf(h0), params, train_mode, rng).values


class TestEncode(unittest.TestCase):
    """Tests for the GCN forward pass."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(0)

    def test_isolated_nodes_identity(self):
        """Test that L=1 with identity weights on isolated nodes returns h0."""
        adj = normalize_adjacency(build_graph([], 3))
        h0 = self.rng.standard_normal((3, 2))
        assert_allclose(run(adj, h0, EncoderParams([np.eye(2)])), h0)

    def test_two_node_graph(self):
        """Test propagation values forced by the normalization."""
        adj = normalize_adjacency(build_graph([(0, 1)], 2))
        out = run(adj, np.array([[2.0, 0.0], [0.0, 2.0]]), EncoderParams([np.eye(2)]))
        assert_allclose(out, [[1.0, 1.0], [1.0, 1.0]])

    def test_final_layer_is_linear(self):
        """Test that negative outputs survive the last layer."""
        adj = normalize_adjacency(build_graph([], 1))
        out = run(adj, np.array([[-1.0]]), EncoderParams([np.eye(1)]))
        assert_allclose(out, [[-1.0]])

    def test_dense_oracle_two_layers(self):
        """Test a two-layer encoder against dense matrix algebra."""
        g = random_graph(10, 20, seed=1)
        adj = normalize_adjacency(g)
        a = adj.to_dense()
        params = EncoderParams.initialize([4, 4, 3], self.rng, dropout_p=0.0, residual=True,
                                          dtype=np.float64)
        h0 = self.rng.standard_normal((10, 4))
        w1, w2 = params.weights
        hidden = np.maximum(a @ h0 @ w1, 0) + h0
        expected = a @ hidden @ w2
        assert_allclose(run(adj, h0, params), expected, rtol=1e-5)

    def test_dense_oracle_with_dropout_masks(self):
        """Test training mode against the same masks applied densely."""
        g = random_graph(10, 20, seed=2)
        adj = normalize_adjacency(g)
        a = adj.to_dense()
        params = EncoderParams.initialize([3, 5, 2], self.rng, dropout_p=0.3, dtype=np.float64)
        h0 = self.rng.standard_normal((10, 3))
        out = run(adj, h0, params, train_mode=True, rng=np.random.default_rng(7))
        mask = (np.random.default_rng(7).random((10, 5)) >= 0.3) / 0.7
        w1, w2 = params.weights
        expected = a @ (np.maximum(a @ h0 @ w1, 0) * mask) @ w2
        assert_allclose(out, expected, rtol=1e-5)

    def test_no_residual_when_widths_differ(self):
        """Test that the residual is skipped when widths change."""
        adj = normalize_adjacency(build_graph([], 2))
        params = EncoderParams([np.ones((2, 3)), np.ones((3, 1))], residual=True, dropout_p=0.0)
        out = run(adj, np.ones((2, 2)), params)
        assert_allclose(out, [[6.0], [6.0]])

    def test_biases(self):
        """Test that layer biases are added."""
        adj = normalize_adjacency(build_graph([], 2))
        params = EncoderParams([np.eye(2)], biases=[np.array([[1.0, -1.0]])])
        out = run(adj, np.zeros((2, 2)), params)
        assert_allclose(out, [[1.0, -1.0], [1.0, -1.0]])

    def test_permutation_equivariance(self):
        """Test that relabelling nodes permutes the output rows."""
        g = random_graph(12, 30, seed=3)
        perm = self.rng.permutation(12)
        inverse = np.argsort(perm)
        permuted = build_graph(inverse[g.edge_pairs()], 12)
        params = EncoderParams.initialize([3, 3, 2], self.rng, dropout_p=0.0, dtype=np.float64)
        h0 = self.rng.standard_normal((12, 3))
        out = run(normalize_adjacency(g), h0, params)
        out_permuted = run(normalize_adjacency(permuted), h0[perm], params)
        assert_allclose(out_permuted, out[perm], rtol=1e-10, atol=1e-12)

    def test_sampled_block_matches_full_batch(self):
        """Test that saturating fanouts reproduce full-batch rows of the seeds."""
        g = random_graph(30, 70, seed=4)
        params = EncoderParams.initialize([4, 4, 3], self.rng, dropout_p=0.0, dtype=np.float64)
        h0 = self.rng.standard_normal((30, 4))
        full = run(normalize_adjacency(g), h0, params)
        seeds = np.array([2, 11, 17, 25])
        block = neighbor_sample(g, seeds, [g.max_degree(), g.max_degree()], self.rng)
        sampled = run(block, h0[block.input_nodes], params)
        assert_allclose(sampled, full[seeds], rtol=1e-5, atol=1e-8)

    def test_block_depth_mismatch(self):
        """Test that a block must have one layer per encoder layer."""
        g = random_graph(10, 20, seed=5)
        params = EncoderParams.initialize([2, 2, 2], self.rng)
        block = neighbor_sample(g, [0, 1], [3], self.rng)
        with self.assertRaises(ShapeError):
            run(block, np.ones((block.input_nodes.size, 2), dtype=np.float32), params)

    def test_input_width_mismatch(self):
        """Test that h0 must match the first fan-in."""
        adj = normalize_adjacency(build_graph([], 2))
        with self.assertRaises(ShapeError):
            run(adj, np.ones((2, 3)), EncoderParams([np.eye(2)]))

    def test_weights_must_chain(self):
        """Test construction-time validation of layer widths."""
        with self.assertRaises(ShapeError):
            EncoderParams([np.ones((2, 3)), np.ones((2, 2))])
        with self.assertRaises(ConfigError):
            EncoderParams([])


if __name__ == '__main__':
    unittest.main()
