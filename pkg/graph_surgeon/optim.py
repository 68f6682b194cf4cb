"""
Adam optimizer over named parameter arrays
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from .exceptions import ConfigError, ShapeError


@dataclass
class OptimizerState:
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


class Adam:
    """
    Adam with bias correction, updating parameter arrays in place

    Args:
        lr: Learning rate
        betas: Decay rates of the first and second moment estimates
        eps: Denominator offset
    """

    def __init__(self, lr: float = 1e-3, betas: Tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8):
        if lr <= 0:
            raise ConfigError(f"learning rate must be > 0, got {lr}")
        if not all(0.0 <= b < 1.0 for b in betas):
            raise ConfigError(f"Adam betas must lie in [0, 1), got {betas}")
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps
        self.state = OptimizerState()

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        """
        Apply one update

        Args:
            params: Parameter arrays keyed by name, modified in place
            grads: Gradients with the same keys and shapes
        """
        for name, p in params.items():
            if name not in grads:
                raise ShapeError("adam", [p.shape], f"no gradient for parameter '{name}'")
            if grads[name].shape != p.shape:
                raise ShapeError("adam", [p.shape, grads[name].shape], name)

        self.state.step += 1
        t = self.state.step
        beta1, beta2 = self.betas
        for name, p in params.items():
            g = grads[name]
            m = self.state.first_moment.setdefault(name, np.zeros_like(p))
            v = self.state.second_moment.setdefault(name, np.zeros_like(p))
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            m_hat = m / (1.0 - beta1 ** t)
            v_hat = v / (1.0 - beta2 ** t)
            p -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)
