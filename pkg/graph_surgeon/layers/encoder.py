"""
Shared graph convolutional encoder

H^(l+1) = relu(A_hat H^(l) W^(l+1)) on hidden layers, linear on the last.
Hidden layers optionally add a residual connection when their input and
output widths match. The propagation operator is either the normalized
full-graph adjacency or one layer of a sampled block per convolution.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ..exceptions import ConfigError, ShapeError
from ..graph import NormalizedAdjacency, SampledBlock
from ..tape import Tape, Tensor
from .base import ParameterSet, glorot_uniform

Propagation = Union[NormalizedAdjacency, SampledBlock]


@dataclass(eq=False)
class EncoderParams(ParameterSet):
    """Per-layer weights of the encoder and its regularization settings"""

    weights: List[np.ndarray]
    biases: List[Optional[np.ndarray]] = field(default_factory=list)
    dropout_p: float = 0.2
    residual: bool = True

    prefix = "encoder"

    def __post_init__(self):
        if not self.weights:
            raise ConfigError("encoder needs at least one layer")
        if not self.biases:
            self.biases = [None] * len(self.weights)
        if len(self.biases) != len(self.weights):
            raise ConfigError("encoder biases must match its layers one to one")
        for prev, nxt in zip(self.weights, self.weights[1:]):
            if prev.shape[1] != nxt.shape[0]:
                raise ShapeError("encoder", [prev.shape, nxt.shape], "layer widths do not chain")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"encoder dropout must lie in [0, 1), got {self.dropout_p}")

    @classmethod
    def initialize(
        cls,
        dims: Sequence[int],
        rng: np.random.Generator,
        bias: bool = False,
        dropout_p: float = 0.2,
        residual: bool = True,
        dtype=np.float32,
    ) -> "EncoderParams":
        """
        Glorot-initialize an encoder with layer widths ``dims``

        Args:
            dims: [F_in, hidden..., F_out], at least two entries
            rng: Parent generator; each layer draws from its own child
            bias: Whether each layer carries a bias row
            dropout_p: Dropout probability after hidden activations
            residual: Whether hidden layers add their input when widths match
            dtype: Parameter value type
        """
        if len(dims) < 2:
            raise ConfigError("encoder needs at least one layer")
        layer_rngs = rng.spawn(len(dims) - 1)
        weights = [
            glorot_uniform(fan_in, fan_out, layer_rng, dtype)
            for fan_in, fan_out, layer_rng in zip(dims[:-1], dims[1:], layer_rngs)
        ]
        biases = [np.zeros((1, w.shape[1]), dtype=dtype) if bias else None for w in weights]
        return cls(weights=weights, biases=biases, dropout_p=dropout_p, residual=residual)

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def dims(self) -> List[int]:
        return [int(self.weights[0].shape[0])] + [int(w.shape[1]) for w in self.weights]

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    def named_arrays(self) -> Dict[str, np.ndarray]:
        arrays = {}
        for layer, (w, b) in enumerate(zip(self.weights, self.biases), start=1):
            arrays[f"w{layer}"] = w
            if b is not None:
                arrays[f"b{layer}"] = b
        return arrays


def encode(
    tape: Tape,
    propagation: Propagation,
    h0: Tensor,
    params: EncoderParams,
    train_mode: bool,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """
    Run the encoder forward

    Args:
        tape: Tape recording the forward pass
        propagation: Full-graph adjacency, or a sampled block whose depth
            equals the number of layers
        h0: Input rows (all nodes, or the block's input nodes)
        params: Encoder parameters
        train_mode: Whether dropout is active
        rng: Generator for dropout masks (required in training)

    Returns:
        Output rows (all nodes, or the block's seed nodes)
    """
    num_layers = params.num_layers
    if isinstance(propagation, SampledBlock):
        if propagation.depth != num_layers:
            raise ShapeError(
                "encode", [(propagation.depth,), (num_layers,)],
                "sampled block depth differs from encoder depth",
            )
        operators = list(propagation.layers)
        sampled = True
    else:
        operators = [propagation] * num_layers
        sampled = False

    if h0.shape[1] != params.in_dim:
        raise ShapeError("encode", [h0.shape, params.weights[0].shape])

    bound = params.bind(tape)
    h = h0
    for layer, operator in enumerate(operators, start=1):
        out = tape.matmul(tape.spmm_const(operator, h), bound[f"w{layer}"])
        if f"b{layer}" in bound:
            out = tape.add(out, bound[f"b{layer}"])
        if layer < num_layers:
            out = tape.relu(out)
            if train_mode and params.dropout_p > 0:
                out = tape.dropout(out, params.dropout_p, rng)
            if params.residual and out.shape[1] == h.shape[1]:
                skip = tape.spmm_const(operator.selector(h.values.dtype), h) if sampled else h
                out = tape.add(out, skip)
        h = out
    return h
