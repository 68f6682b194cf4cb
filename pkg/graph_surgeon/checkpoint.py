"""
Versioned binary model checkpoints

Layout (little-endian): magic ``GSRG``, u32 format version, u32 mode flag
(0 pre, 1 post), u32 tensor count, then per tensor a u16 name length,
UTF-8 name, u64 rows and u64 cols, followed by every tensor's f32 values
row-major in declaration order.
"""

import logging
import re
import struct
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from .dataio import atomic_write_bytes
from .exceptions import DatasetFormatError, ModeMismatchError
from .layers import AugmenterParams, EncoderParams
from .trainer import AugmentMode, TrainConfig, TrainedModel

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"GSRG"
CHECKPOINT_VERSION = 1

_MODE_FLAGS = {AugmentMode.PRE: 0, AugmentMode.POST: 1}


def save_checkpoint(path: Union[str, Path], model: TrainedModel) -> None:
    """Write ``model`` to ``path``, replacing any existing file atomically"""
    arrays = model.parameters()
    flag = _MODE_FLAGS[model.mode]
    header = [CHECKPOINT_MAGIC, struct.pack("<III", CHECKPOINT_VERSION, flag, len(arrays))]
    for name, array in arrays.items():
        encoded = name.encode("utf-8")
        header.append(struct.pack("<H", len(encoded)))
        header.append(encoded)
        header.append(struct.pack("<QQ", *array.shape))
    payload = [np.ascontiguousarray(array, dtype="<f4").tobytes() for array in arrays.values()]
    atomic_write_bytes(path, b"".join(header + payload))
    logger.debug(f"Saved checkpoint {path} ({len(arrays)} tensors)")


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise DatasetFormatError(f"truncated checkpoint while reading {what}", path=self.path)
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_checkpoint(path: Union[str, Path]) -> Tuple[AugmentMode, Dict[str, np.ndarray]]:
    """
    Parse a checkpoint file without building a model

    Returns:
        The stored augmentation mode and the tensors by qualified name
    """
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise DatasetFormatError(f"cannot read checkpoint: {e.strerror}", path=path) from e

    reader = _Reader(data, path)
    if reader.take(4, "magic") != CHECKPOINT_MAGIC:
        raise DatasetFormatError("not a checkpoint file (bad magic)", path=path)
    version, mode_flag, count = reader.unpack("<III", "header")
    if version != CHECKPOINT_VERSION:
        raise DatasetFormatError(f"unsupported checkpoint version {version}", path=path)
    modes = {flag: mode for mode, flag in _MODE_FLAGS.items()}
    if mode_flag not in modes:
        raise DatasetFormatError(f"unknown mode flag {mode_flag}", path=path)

    table: List[Tuple[str, int, int]] = []
    for _ in range(count):
        (name_len,) = reader.unpack("<H", "tensor name length")
        name = reader.take(name_len, "tensor name").decode("utf-8", errors="replace")
        rows, cols = reader.unpack("<QQ", f"shape of {name}")
        table.append((name, rows, cols))

    arrays = {}
    for name, rows, cols in table:
        raw = reader.take(rows * cols * 4, f"values of {name}")
        arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(rows, cols).astype(np.float32)
    if reader.offset != len(data):
        trailing = len(data) - reader.offset
        raise DatasetFormatError(f"{trailing} trailing bytes after tensors", path=path)
    return modes[mode_flag], arrays


def _layer_arrays(arrays: Dict[str, np.ndarray], prefix: str, path) -> Dict[str, np.ndarray]:
    local = {}
    for name, array in arrays.items():
        owner, _, local_name = name.partition(".")
        if owner == prefix:
            local[local_name] = array
        elif owner not in ("augmenter", "encoder"):
            raise DatasetFormatError(f"unexpected tensor '{name}'", path=path)
    return local


def load_checkpoint(path: Union[str, Path], config: TrainConfig) -> TrainedModel:
    """
    Rebuild a model from a checkpoint

    Dropout rates and the residual flag are taken from ``config``; the
    stored mode must match ``config.mode``.

    Args:
        path: Checkpoint file
        config: Run configuration

    Returns:
        Model with float32 parameters cast to the configured precision
    """
    config.validate()
    mode, arrays = read_checkpoint(path)
    if mode is not config.mode:
        raise ModeMismatchError(
            f"checkpoint holds a {mode.value}-mode model but the configuration selects "
            f"{config.mode.value}", path=path,
        )
    dtype = config.dtype

    aug = _layer_arrays(arrays, "augmenter", path)
    try:
        augmenter = AugmenterParams(
            w1=aug["w1"].astype(dtype),
            b1=aug["b1"].astype(dtype) if "b1" in aug else None,
            w2=aug["w2"].astype(dtype),
            b2=aug["b2"].astype(dtype) if "b2" in aug else None,
            dropout_p=config.augmenter_dropout,
        )
    except KeyError as e:
        raise DatasetFormatError(f"missing tensor augmenter.{e.args[0]}", path=path) from e

    enc = _layer_arrays(arrays, "encoder", path)
    layer_ids = sorted(int(m.group(1)) for m in (re.fullmatch(r"w(\d+)", k) for k in enc) if m)
    if not layer_ids or layer_ids != list(range(1, len(layer_ids) + 1)):
        raise DatasetFormatError("encoder weights are missing or not numbered 1..L", path=path)
    encoder = EncoderParams(
        weights=[enc[f"w{i}"].astype(dtype) for i in layer_ids],
        biases=[enc[f"b{i}"].astype(dtype) if f"b{i}" in enc else None for i in layer_ids],
        dropout_p=config.encoder_dropout,
        residual=config.residual,
    )
    logger.debug(f"Loaded {mode.value}-mode checkpoint {path}")
    return TrainedModel(mode, augmenter, encoder)
