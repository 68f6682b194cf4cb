"""Tests for `graph_surgeon` bench module."""

import unittest

from graph_surgeon.bench import (
    BenchConfig,
    BenchReport,
    batch_size_sweep,
    constraint_scaling,
    embedding_size_sweep,
    run_bench,
)
from graph_surgeon.dataio import SbmConfig, generate_sbm
from graph_surgeon.exceptions import ConfigError
from graph_surgeon.probe import ProbeConfig
from graph_surgeon.trainer import BatchConfig, TrainConfig


def small_train(**overrides):
    values = dict(epochs=1, lr=1e-2, embed_dim=6, seed=0)
    values.update(overrides)
    return TrainConfig(**values)


class TestBenchConfig(unittest.TestCase):
    """Tests for benchmark validation."""

    def test_minimum_warmup(self):
        """Test that fewer than three warmup epochs are rejected."""
        with self.assertRaises(ConfigError):
            BenchConfig(warmup=2).validate()

    def test_minimum_timed_epochs(self):
        """Test that fewer than ten timed epochs are rejected."""
        with self.assertRaises(ConfigError):
            BenchConfig(epochs=9).validate()

    def test_embedding_sizes_positive(self):
        """Test that a zero embedding size is rejected."""
        with self.assertRaises(ConfigError):
            BenchConfig(embed_dims=(16, 0)).validate()


class TestRunBench(unittest.TestCase):
    """Tests for the four-cell benchmark."""

    @classmethod
    def setUpClass(cls):
        cls.dataset = generate_sbm(SbmConfig(blocks=2, nodes_per_block=20, p_in=0.3, p_out=0.02,
                                             feature_dim=8))
        cls.report = run_bench(cls.dataset, small_train(), BenchConfig())

    def test_four_rows(self):
        """Test one row per mode and constraint."""
        self.assertEqual(len(self.report.rows), 4)
        for mode in ("pre", "post"):
            for constraint in ("row", "column"):
                row = self.report.row(mode, constraint)
                self.assertEqual(row.epochs_timed, 10)
                self.assertGreater(row.mean_ms, 0.0)
                self.assertGreater(row.peak_bytes, 0)

    def test_constraint_bytes(self):
        """Test Gram sizes: B x B for rows, F_L x F_L for columns."""
        self.assertEqual(self.report.row("pre", "row").constraint_bytes, 40 * 40 * 4)
        self.assertEqual(self.report.row("pre", "column").constraint_bytes, 6 * 6 * 4)

    def test_post_mode_encodes_once(self):
        """Test encoder passes per step in each mode."""
        self.assertEqual(self.report.row("pre", "column").encoder_forwards, 2)
        self.assertEqual(self.report.row("post", "column").encoder_forwards, 1)

    def test_csv_and_table(self):
        """Test the report renderings."""
        lines = self.report.to_csv().splitlines()
        self.assertEqual(lines[0], "mode,constraint,epochs_timed,mean_ms,peak_bytes,"
                                   "constraint_bytes,encoder_forwards")
        self.assertEqual(len(lines), 5)
        self.assertEqual(len(self.report.table().splitlines()), 5)


class TestSweeps(unittest.TestCase):
    """Tests for the scaling and batch-size sweeps."""

    def test_column_memory_constant_across_sizes(self):
        """Test that column Grams stay fixed while row Grams grow with N."""
        sbm = SbmConfig(blocks=4, p_in=0.3, p_out=0.02, feature_dim=8)
        rows = constraint_scaling([40, 80], small_train(), sbm)
        by_key = {(r.num_nodes, r.constraint): r.constraint_bytes for r in rows}
        self.assertEqual(by_key[(40, "column")], by_key[(80, "column")])
        self.assertEqual(by_key[(40, "row")], 40 * 40 * 4)
        self.assertEqual(by_key[(80, "row")], 80 * 80 * 4)

    def test_batch_size_sweep(self):
        """Test one probe score per batch size."""
        dataset = generate_sbm(SbmConfig(blocks=2, nodes_per_block=20, p_in=0.3, p_out=0.02,
                                         feature_dim=8))
        train = small_train(epochs=2, batch=BatchConfig(fanouts=(3, 3)))
        rows = batch_size_sweep(dataset, train, [16, 40], ProbeConfig(epochs=20))
        self.assertEqual([r.batch_size for r in rows], [16, 40])
        for row in rows:
            self.assertEqual(row.metric, "accuracy")
            self.assertTrue(0.0 <= row.value <= 1.0)


    def test_embedding_size_sweep(self):
        """Test one held-out score per embedding width, written in sweep order."""
        dataset = generate_sbm(SbmConfig(blocks=2, nodes_per_block=20, p_in=0.3, p_out=0.02,
                                         feature_dim=8))
        for mode in ("pre", "post"):
            rows = embedding_size_sweep(dataset, small_train(epochs=2, mode=mode), [4, 12],
                                        ProbeConfig(epochs=20))
            self.assertEqual([r.embed_dim for r in rows], [4, 12])
            for row in rows:
                self.assertEqual(row.metric, "accuracy")
                self.assertTrue(0.0 <= row.value <= 1.0)
        lines = BenchReport(embed_dims=rows).embed_dims_csv().splitlines()
        self.assertEqual(lines[0], "embed_dim,metric,value,mean_ms")
        self.assertTrue(lines[2].startswith("12,accuracy,"))


if __name__ == '__main__':
    unittest.main()
