"""Tests for `graph_surgeon` checkpoint module."""

import os
import tempfile
import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_array_equal

from graph_surgeon.checkpoint import (
    CHECKPOINT_MAGIC,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
)
from graph_surgeon.exceptions import DatasetFormatError, ModeMismatchError
from graph_surgeon.trainer import AugmentMode, GraphSurgeon, TrainConfig


class TestCheckpoint(unittest.TestCase):
    """Tests for saving and loading models."""

    def setUp(self):
        """Set up test fixtures."""
        self.tmpdir = tempfile.TemporaryDirectory()
        self.path = Path(self.tmpdir.name) / "model.gsrg"
        self.config = TrainConfig(embed_dim=4, hidden_dim=5, num_layers=3, encoder_bias=True)
        self.model = GraphSurgeon(self.config).init_model(6)

    def tearDown(self):
        self.tmpdir.cleanup()

    def test_round_trip(self):
        """Test that every tensor and the mode survive a save and load."""
        save_checkpoint(self.path, self.model)
        loaded = load_checkpoint(self.path, self.config)
        self.assertIs(loaded.mode, AugmentMode.PRE)
        self.assertEqual(list(loaded.parameters()), list(self.model.parameters()))
        for name, array in self.model.parameters().items():
            assert_array_equal(loaded.parameters()[name], array)
        self.assertEqual(loaded.encoder.dims, [6, 5, 5, 4])
        self.assertEqual(loaded.encoder.dropout_p, self.config.encoder_dropout)

    def test_header(self):
        """Test the magic and the stored mode flag."""
        post = TrainConfig(mode="post", embed_dim=4)
        save_checkpoint(self.path, GraphSurgeon(post).init_model(6))
        self.assertEqual(self.path.read_bytes()[:4], CHECKPOINT_MAGIC)
        mode, arrays = read_checkpoint(self.path)
        self.assertIs(mode, AugmentMode.POST)
        self.assertEqual(arrays["augmenter.w1"].shape, (4, 4))

    def test_mode_mismatch(self):
        """Test that loading under the other mode is rejected."""
        save_checkpoint(self.path, self.model)
        with self.assertRaises(ModeMismatchError):
            load_checkpoint(self.path, TrainConfig(mode="post"))

    def test_truncated_file(self):
        """Test that a truncated checkpoint raises instead of loading partially."""
        save_checkpoint(self.path, self.model)
        data = self.path.read_bytes()
        self.path.write_bytes(data[:-3])
        with self.assertRaises(DatasetFormatError) as ctx:
            read_checkpoint(self.path)
        self.assertIn("truncated", str(ctx.exception))

    def test_trailing_bytes(self):
        """Test that extra bytes after the tensors are rejected."""
        save_checkpoint(self.path, self.model)
        with open(self.path, "ab") as f:
            f.write(b"\0")
        with self.assertRaises(DatasetFormatError):
            read_checkpoint(self.path)

    def test_bad_magic(self):
        """Test that other files are not mistaken for checkpoints."""
        self.path.write_bytes(b"GSEM" + bytes(32))
        with self.assertRaises(DatasetFormatError):
            read_checkpoint(self.path)

    def test_overwrite_leaves_no_temporaries(self):
        """Test that saving twice replaces the file in place."""
        save_checkpoint(self.path, self.model)
        save_checkpoint(self.path, self.model)
        self.assertEqual(os.listdir(self.tmpdir.name), ["model.gsrg"])

    def test_float64_model_saved_as_float32(self):
        """Test that double-precision parameters load back at the configured precision."""
        config = TrainConfig(embed_dim=4, precision="float64")
        model = GraphSurgeon(config).init_model(3)
        save_checkpoint(self.path, model)
        loaded = load_checkpoint(self.path, config)
        w1 = loaded.parameters()["encoder.w1"]
        self.assertEqual(w1.dtype, np.float64)
        assert_array_equal(w1, model.parameters()["encoder.w1"].astype(np.float32))


if __name__ == '__main__':
    unittest.main()
