"""Tests for `graph_surgeon` probe module."""

import unittest

import numpy as np
from numpy.testing import assert_array_equal

from graph_surgeon.exceptions import DatasetFormatError, ModeMismatchError
from graph_surgeon.probe import (
    LabelSet,
    ProbeModel,
    TaskKind,
    evaluate,
    fit_probe,
    micro_roc_auc,
    stable_rank,
)


def two_clusters(rng, per_class=50):
    x = np.concatenate([rng.normal(-3.0, 0.5, (per_class, 2)),
                        rng.normal(3.0, 0.5, (per_class, 2))])
    y = np.repeat([0, 1], per_class)
    return x, y


class TestLabelSet(unittest.TestCase):
    """Tests for label validation."""

    def test_binary_needs_two_classes(self):
        """Test that binary tasks declare two classes."""
        with self.assertRaises(DatasetFormatError):
            LabelSet(TaskKind.BINARY, 3, np.array([0, 1]))

    def test_class_out_of_range(self):
        """Test that labels must lie below C."""
        with self.assertRaises(DatasetFormatError):
            LabelSet(TaskKind.MULTICLASS, 3, np.array([0, 3]))

    def test_multilabel_shape(self):
        """Test multi-label targets are an N x C 0/1 matrix."""
        with self.assertRaises(DatasetFormatError):
            LabelSet(TaskKind.MULTILABEL, 3, np.array([[0, 1]]))
        labels = LabelSet("multilabel", 2, np.array([[0, 1], [1, 1]]))
        self.assertEqual(labels.task.metric, "roc_auc")
        assert_array_equal(labels.targets(), [[0.0, 1.0], [1.0, 1.0]])


class TestFitProbe(unittest.TestCase):
    """Tests for probe training and scoring."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(0)

    def test_separable_clusters(self):
        """Test that separable clusters are fit perfectly."""
        x, y = two_clusters(self.rng)
        labels = LabelSet(TaskKind.BINARY, 2, y)
        probe = fit_probe(x, labels, np.arange(100), epochs=100, lr=0.5)
        metrics = evaluate(probe, x, labels, np.arange(100))
        self.assertEqual(metrics.name, "accuracy")
        self.assertEqual(metrics.value, 1.0)
        self.assertEqual(metrics.count, 100)

    def test_multiclass_separable(self):
        """Test softmax training on three separable clusters."""
        centers = np.array([[5.0, 0.0], [-5.0, 0.0], [0.0, 5.0]])
        y = np.repeat([0, 1, 2], 30)
        x = centers[y] + self.rng.normal(0.0, 0.3, (90, 2))
        labels = LabelSet(TaskKind.MULTICLASS, 3, y)
        probe = fit_probe(x, labels, np.arange(90), epochs=200, lr=0.5)
        self.assertEqual(evaluate(probe, x, labels, np.arange(90)).value, 1.0)

    def test_constant_embeddings_predict_majority(self):
        """Test that embeddings without signal fall back to the majority class."""
        y = np.array([0] * 70 + [1] * 20 + [2] * 10)
        labels = LabelSet(TaskKind.MULTICLASS, 3, y)
        x = np.ones((100, 4))
        probe = fit_probe(x, labels, np.arange(0, 100, 2), epochs=100, lr=0.1)
        metrics = evaluate(probe, x, labels, np.arange(1, 100, 2))
        self.assertAlmostEqual(metrics.value, 0.7)

    def test_embeddings_not_modified(self):
        """Test that the probe never writes to the embeddings."""
        x, y = two_clusters(self.rng)
        frozen = x.copy()
        fit_probe(x, LabelSet(TaskKind.BINARY, 2, y), np.arange(0, 100, 3))
        assert_array_equal(x, frozen)

    def test_monotone_rescaling_keeps_accuracy(self):
        """Test that standardization makes accuracy invariant to column scaling."""
        x, y = two_clusters(self.rng)
        labels = LabelSet(TaskKind.BINARY, 2, y)
        train, test = np.arange(0, 100, 2), np.arange(1, 100, 2)
        base = evaluate(fit_probe(x, labels, train), x, labels, test).value
        scaled = x * np.array([100.0, 0.01]) + 7.0
        rescaled = evaluate(fit_probe(scaled, labels, train), scaled, labels, test).value
        self.assertEqual(rescaled, base)

    def test_absent_class_warns(self):
        """Test that a class missing from training is reported and the probe still fits."""
        y = np.array([0, 0, 1, 1, 2, 2])
        labels = LabelSet(TaskKind.MULTICLASS, 3, y)
        with self.assertLogs("graph_surgeon.probe", level="WARNING") as logs:
            probe = fit_probe(np.eye(6), labels, [0, 1, 2, 3])
        self.assertIn("[2]", logs.output[0])
        self.assertEqual(probe.weights.shape, (6, 3))

    def test_tie_goes_to_lowest_class(self):
        """Test argmax tie-breaking toward the lowest class index."""
        probe = ProbeModel(weights=np.zeros((2, 3)), bias=np.array([0.0, 1.0, 1.0]),
                           task=TaskKind.MULTICLASS)
        labels = LabelSet(TaskKind.MULTICLASS, 3, np.array([1, 2]))
        metrics = evaluate(probe, np.zeros((2, 2)), labels, [0, 1])
        self.assertEqual(metrics.value, 0.5)

    def test_multilabel_reports_roc_auc(self):
        """Test that multi-label tasks are scored by micro ROC-AUC."""
        y = (self.rng.random((200, 3)) < 0.5).astype(int)
        x = y * 2.0 + self.rng.normal(0.0, 0.1, (200, 3))
        labels = LabelSet(TaskKind.MULTILABEL, 3, y)
        probe = fit_probe(x, labels, np.arange(100), epochs=200, lr=0.5)
        metrics = evaluate(probe, x, labels, np.arange(100, 200))
        self.assertEqual(metrics.name, "roc_auc")
        self.assertGreater(metrics.value, 0.95)
        self.assertEqual(sorted(metrics.per_class), [0, 1, 2])

    def test_task_mismatch(self):
        """Test that scoring against labels of another task kind is refused."""
        x, y = two_clusters(self.rng)
        probe = fit_probe(x, LabelSet(TaskKind.BINARY, 2, y), np.arange(100))
        flags = np.column_stack([y, 1 - y])
        with self.assertRaises(ModeMismatchError) as ctx:
            evaluate(probe, x, LabelSet(TaskKind.MULTILABEL, 2, flags), np.arange(100))
        self.assertIn("binary", str(ctx.exception))
        self.assertIn("multilabel", str(ctx.exception))

    def test_results_line(self):
        """Test the one-line metric format."""
        x, y = two_clusters(self.rng)
        labels = LabelSet(TaskKind.BINARY, 2, y)
        metrics = evaluate(fit_probe(x, labels, np.arange(100)), x, labels, np.arange(100))
        self.assertEqual(metrics.results_line("test", 3),
                         "metric=accuracy value=1.000000 split=test seed=3")


class TestRocAuc(unittest.TestCase):
    """Tests for the micro-averaged ROC-AUC."""

    def test_perfect_scores(self):
        """Test that scores equal to the labels give 1."""
        targets = np.array([[0, 1], [1, 0], [1, 1], [0, 0]])
        self.assertEqual(micro_roc_auc(targets, targets.astype(float)).value, 1.0)

    def test_random_scores(self):
        """Test that scores independent of labels approach 0.5."""
        rng = np.random.default_rng(0)
        targets = (rng.random((10000, 1)) < 0.3).astype(int)
        auc = micro_roc_auc(targets, rng.random((10000, 1))).value
        self.assertAlmostEqual(auc, 0.5, delta=0.02)

    def test_ties_get_average_rank(self):
        """Test that tied scores count one half."""
        self.assertEqual(micro_roc_auc(np.array([0, 1]), np.array([0.5, 0.5])).value, 0.5)

    def test_single_polarity_class_excluded(self):
        """Test that a one-polarity class is left out of the per-class values only."""
        targets = np.array([[1, 0], [1, 1], [1, 0]])
        scores = np.array([[0.1, 0.2], [0.3, 0.9], [0.2, 0.1]])
        with self.assertLogs("graph_surgeon.probe", level="WARNING"):
            metrics = micro_roc_auc(targets, scores)
        self.assertEqual(list(metrics.per_class), [1])
        self.assertEqual(metrics.per_class[1], 1.0)
        self.assertFalse(np.isnan(metrics.value))


class TestStableRank(unittest.TestCase):
    """Tests for the collapse diagnostic."""

    def test_identity(self):
        """Test that an identity has full stable rank."""
        self.assertAlmostEqual(stable_rank(np.eye(5)), 5.0)

    def test_rank_one(self):
        """Test that a rank-one matrix has stable rank 1."""
        self.assertAlmostEqual(stable_rank(np.outer(np.arange(1, 5), np.ones(3))), 1.0)

    def test_zero(self):
        """Test that the zero matrix gives 0."""
        self.assertEqual(stable_rank(np.zeros((3, 3))), 0.0)


if __name__ == '__main__':
    unittest.main()
