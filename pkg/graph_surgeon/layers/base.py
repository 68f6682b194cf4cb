"""
Base class for trainable parameter groups
"""

from typing import Dict, Optional

import numpy as np

from ..tape import Tape, Tensor


def glorot_uniform(
    fan_in: int,
    fan_out: int,
    rng: np.random.Generator,
    dtype=np.float32,
) -> np.ndarray:
    """
    Draw a weight matrix from U(-a, a) with a = sqrt(6 / (fan_in + fan_out))

    Args:
        fan_in: Number of input features
        fan_out: Number of output features
        rng: Generator owned by the caller
        dtype: Value type of the returned matrix

    Returns:
        Matrix of shape (fan_in, fan_out)
    """
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


class ParameterSet:
    """Base class for a named group of trainable matrices"""

    prefix: Optional[str] = None  # To be defined in subclasses

    def named_arrays(self) -> Dict[str, np.ndarray]:
        """
        Parameter arrays in declaration order

        Returns:
            Mapping of local parameter name to array (biases are 1 x D rows)
        """
        raise NotImplementedError

    def parameters(self) -> Dict[str, np.ndarray]:
        """Parameter arrays keyed by their qualified ``prefix.name``"""
        return {f"{self.prefix}.{name}": array for name, array in self.named_arrays().items()}

    def bind(self, tape: Tape) -> Dict[str, Tensor]:
        """
        Record the parameters as trainable leaves of a tape

        Binding the same set twice on one tape returns the same leaves, so
        a shared module used twice accumulates its gradients.

        Args:
            tape: Tape of the current forward pass

        Returns:
            Mapping of local parameter name to leaf tensor
        """
        return {
            name: tape.param(f"{self.prefix}.{name}", array)
            for name, array in self.named_arrays().items()
        }

    def num_parameters(self) -> int:
        return int(sum(array.size for array in self.named_arrays().values()))

    @property
    def dtype(self):
        return next(iter(self.named_arrays().values())).dtype
