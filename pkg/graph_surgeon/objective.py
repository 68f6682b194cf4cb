"""
Laplacian-Eigenmaps style self-supervised loss

The invariance term pulls the two unit-normalized views together; one
orthogonality constraint per view keeps the embeddings from collapsing.
The constraint is computed on the B x B row Gram (``row`` mode) or the
F x F column Gram (``column`` mode), which bounds its memory by the
embedding width instead of the batch size.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict

from .exceptions import ConfigError, ShapeError
from .tape import Tape, Tensor


class ConstraintMode(str, Enum):
    ROW = "row"
    COLUMN = "column"


class Reduction(str, Enum):
    MEAN = "mean"
    SUM = "sum"


@dataclass
class LossConfig:
    """
    Loss hyperparameters

    Attributes:
        gamma: Weight of each orthogonality constraint
        constraint_mode: Gram orientation of the constraint
        invariance_reduction: Mean or sum of squared differences
    """

    gamma: float = 1.0
    constraint_mode: ConstraintMode = ConstraintMode.COLUMN
    invariance_reduction: Reduction = Reduction.MEAN

    def validate(self) -> None:
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        self.constraint_mode = ConstraintMode(self.constraint_mode)
        self.invariance_reduction = Reduction(self.invariance_reduction)


@dataclass
class LossTerms:
    total: Tensor
    invariance: Tensor
    constraint1: Tensor
    constraint2: Tensor

    def as_floats(self) -> Dict[str, float]:
        return {
            "loss": self.total.item(),
            "invariance": self.invariance.item(),
            "constraint1": self.constraint1.item(),
            "constraint2": self.constraint2.item(),
        }


def unit_rows(tape: Tape, z: Tensor) -> Tensor:
    """Scale each row to unit L2 norm (zero rows stay zero)"""
    return tape.row_l2_normalize(z)


def invariance_term(
    tape: Tape, z1: Tensor, z2: Tensor, reduction: Reduction = Reduction.MEAN
) -> Tensor:
    if z1.shape != z2.shape:
        raise ShapeError("invariance_term", [z1.shape, z2.shape])
    term = tape.mse_mean(z1, z2)
    if Reduction(reduction) is Reduction.SUM:
        term = tape.scale(term, z1.shape[0] * z1.shape[1])
    return term


def constraint_term(tape: Tape, z: Tensor, mode: ConstraintMode) -> Tensor:
    """||Z Z^T - I||_F in row mode, ||Z^T Z - I||_F in column mode"""
    if ConstraintMode(mode) is ConstraintMode.ROW:
        gram = tape.gram_rows(z)
    else:
        gram = tape.gram_cols(z)
    return tape.frob_norm(tape.sub_identity(gram))


def total_loss(tape: Tape, z1: Tensor, z2: Tensor, config: LossConfig) -> LossTerms:
    """
    Combine invariance and both constraints

    Args:
        tape: Tape recording the forward pass
        z1: Unit-row embeddings of the first view
        z2: Unit-row embeddings of the second view
        config: Loss hyperparameters

    Returns:
        The total and its components, all 1x1 tensors on ``tape``
    """
    invariance = invariance_term(tape, z1, z2, config.invariance_reduction)
    constraint1 = constraint_term(tape, z1, config.constraint_mode)
    constraint2 = constraint_term(tape, z2, config.constraint_mode)
    penalty = tape.scale(tape.add(constraint1, constraint2), config.gamma)
    total = tape.add(invariance, penalty)
    return LossTerms(total, invariance, constraint1, constraint2)
