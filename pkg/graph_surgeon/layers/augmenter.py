"""
Learnable augmentation heads

Two independently initialized linear heads f_1, f_2 map one signal to two
views. Placed before the encoder they augment node features; placed after
it they augment node representations.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from ..exceptions import ConfigError, ShapeError
from ..tape import Tape, Tensor
from .base import ParameterSet, glorot_uniform


@dataclass(eq=False)
class AugmenterParams(ParameterSet):
    """Weights and biases of the two augmentation heads"""

    w1: np.ndarray
    b1: Optional[np.ndarray]
    w2: np.ndarray
    b2: Optional[np.ndarray]
    dropout_p: float = 0.2

    prefix = "augmenter"

    def __post_init__(self):
        if self.w1.shape != self.w2.shape:
            raise ShapeError("augmenter", [self.w1.shape, self.w2.shape], "heads differ in shape")
        if self.w1 is self.w2 or np.shares_memory(self.w1, self.w2):
            raise ConfigError("augmentation heads must not share weight storage")
        if (self.b1 is None) != (self.b2 is None):
            raise ConfigError("either both augmentation heads carry a bias or neither does")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"augmenter dropout must lie in [0, 1), got {self.dropout_p}")

    @classmethod
    def initialize(
        cls,
        in_dim: int,
        out_dim: int,
        rng: np.random.Generator,
        bias: bool = True,
        dropout_p: float = 0.2,
        dtype=np.float32,
    ) -> "AugmenterParams":
        """
        Glorot-initialize both heads from independent child generators

        Args:
            in_dim: Input width F_in
            out_dim: Output width D
            rng: Parent generator
            bias: Whether the heads carry bias rows
            dropout_p: Dropout probability applied to each view in training
            dtype: Parameter value type
        """
        head1, head2 = rng.spawn(2)
        return cls(
            w1=glorot_uniform(in_dim, out_dim, head1, dtype),
            b1=np.zeros((1, out_dim), dtype=dtype) if bias else None,
            w2=glorot_uniform(in_dim, out_dim, head2, dtype),
            b2=np.zeros((1, out_dim), dtype=dtype) if bias else None,
            dropout_p=dropout_p,
        )

    @property
    def in_dim(self) -> int:
        return int(self.w1.shape[0])

    @property
    def out_dim(self) -> int:
        return int(self.w1.shape[1])

    def named_arrays(self) -> Dict[str, np.ndarray]:
        arrays = {"w1": self.w1}
        if self.b1 is not None:
            arrays["b1"] = self.b1
        arrays["w2"] = self.w2
        if self.b2 is not None:
            arrays["b2"] = self.b2
        return arrays


def augment_pair(
    tape: Tape,
    signal: Tensor,
    params: AugmenterParams,
    train_mode: bool,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Tensor, Tensor]:
    """
    Produce two views of a signal

    view_i = dropout(signal @ W_i + b_i); dropout only in training, with an
    independent mask per head.

    Args:
        tape: Tape recording the forward pass
        signal: N x F_in features or representations
        params: Augmentation head parameters
        train_mode: Whether dropout is active
        rng: Generator for dropout masks (required in training)

    Returns:
        Two N x D views
    """
    if signal.shape[1] != params.in_dim:
        raise ShapeError("augment_pair", [signal.shape, params.w1.shape])
    bound = params.bind(tape)
    views = []
    for head in ("1", "2"):
        view = tape.matmul(signal, bound[f"w{head}"])
        if f"b{head}" in bound:
            view = tape.add(view, bound[f"b{head}"])
        if train_mode and params.dropout_p > 0:
            view = tape.dropout(view, params.dropout_p, rng)
        views.append(view)
    return views[0], views[1]
