"""
Reverse-mode automatic differentiation over dense matrices

A :class:`Tape` records a fixed vocabulary of matrix operations in
topological order and replays them backwards to produce gradients for the
leaves that require them. Every recorded buffer is registered with an
:class:`AllocationMeter` so callers can read the high-water mark of
engine-owned memory.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .exceptions import NumericalError, ShapeError

logger = logging.getLogger(__name__)

# Row norms below this are clamped in row_l2_normalize
NORM_EPS = 1e-12

OP_KINDS = (
    "leaf",
    "matmul",
    "spmm_const",
    "add",
    "relu",
    "dropout",
    "row_l2_normalize",
    "mse_mean",
    "gram_rows",
    "gram_cols",
    "sub_identity",
    "frob_norm",
    "scale",
    "mean_pair",
)


class AllocationMeter:
    """High-water mark accounting of tape-owned buffers"""

    def __init__(self):
        self.current_bytes = 0
        self.peak_bytes = 0
        self.largest_by_kind: Dict[str, int] = {}

    def allocate(self, nbytes: int, kind: str) -> None:
        self.current_bytes += int(nbytes)
        self.peak_bytes = max(self.peak_bytes, self.current_bytes)
        if nbytes > self.largest_by_kind.get(kind, 0):
            self.largest_by_kind[kind] = int(nbytes)

    def release(self, nbytes: int) -> None:
        self.current_bytes -= int(nbytes)

    def largest(self, *kinds: str) -> int:
        """Largest single buffer recorded for any of ``kinds``"""
        return max((self.largest_by_kind.get(k, 0) for k in kinds), default=0)


@dataclass(eq=False)
class TapeNode:
    """One recorded operation and the buffers its backward rule needs"""

    node_id: int
    kind: str
    inputs: Tuple[int, ...]
    value: np.ndarray
    requires_grad: bool
    cache: Dict[str, Any] = field(default_factory=dict)
    name: Optional[str] = None


class Tensor:
    """Handle to a value recorded on a tape"""

    __slots__ = ("tape", "node_id")

    def __init__(self, tape: "Tape", node_id: int):
        self.tape = tape
        self.node_id = node_id

    @property
    def node(self) -> TapeNode:
        return self.tape.nodes[self.node_id]

    @property
    def values(self) -> np.ndarray:
        return self.node.value

    @property
    def shape(self) -> Tuple[int, int]:
        return self.node.value.shape

    @property
    def requires_grad(self) -> bool:
        return self.node.requires_grad

    @property
    def grad(self) -> Optional[np.ndarray]:
        """Gradient of the last backward pass (leaves only)"""
        return self.tape.grads.get(self.node_id)

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ShapeError("item", [self.shape], "only 1x1 tensors convert to scalars")
        return float(self.node.value[0, 0])

    def __repr__(self):
        return (f"Tensor(kind={self.node.kind}, shape={self.shape}, "
                f"requires_grad={self.requires_grad})")


def _as_sparse(operator, dtype) -> sp.spmatrix:
    if sp.issparse(operator):
        return operator.astype(dtype).tocsr()
    return operator.as_matrix(dtype)


class Tape:
    """
    Recorder for one forward computation and its backward pass

    A tape is single-threaded; build a fresh tape per training step.
    """

    def __init__(self):
        self.nodes: List[TapeNode] = []
        self.grads: Dict[int, np.ndarray] = {}
        self.meter = AllocationMeter()
        self.op_counts: Counter = Counter()
        self._params: Dict[str, Tensor] = {}

    def _record(
        self,
        kind: str,
        inputs: Sequence[Tensor],
        value: np.ndarray,
        cache: Optional[Dict[str, Any]] = None,
        requires_grad: Optional[bool] = None,
        name: Optional[str] = None,
    ) -> Tensor:
        for t in inputs:
            if t.tape is not self:
                raise ShapeError(kind, [t.shape], "operand recorded on a different tape")
        if requires_grad is None:
            requires_grad = any(t.requires_grad for t in inputs)
        cache = cache or {}
        node = TapeNode(
            node_id=len(self.nodes),
            kind=kind,
            inputs=tuple(t.node_id for t in inputs),
            value=value,
            requires_grad=requires_grad,
            cache=cache,
            name=name,
        )
        self.nodes.append(node)
        self.op_counts[kind] += 1
        cached = sum(v.nbytes for v in cache.values() if isinstance(v, np.ndarray))
        self.meter.allocate(value.nbytes + cached, kind)
        return Tensor(self, node.node_id)

    # -- leaves ---------------------------------------------------------

    def leaf(self, values, requires_grad: bool = False, name: Optional[str] = None) -> Tensor:
        """
        Record an input matrix

        Args:
            values: 2-D array (1-D arrays are treated as a single row)
            requires_grad: Whether backward should produce a gradient
            name: Optional label used in diagnostics

        Returns:
            Leaf tensor
        """
        values = np.asarray(values)
        if values.ndim == 1:
            values = values.reshape(1, -1)
        if values.ndim != 2:
            raise ShapeError("leaf", [values.shape], "tensors are 2-D")
        if not np.issubdtype(values.dtype, np.floating):
            values = values.astype(np.float64)
        if not np.isfinite(values).all():
            raise NumericalError(f"non-finite values in input '{name or 'leaf'}'", term=name)
        return self._record("leaf", [], values, requires_grad=requires_grad, name=name)

    def param(self, name: str, values: np.ndarray) -> Tensor:
        """Trainable leaf, recorded once per tape under ``name``"""
        if name not in self._params:
            self._params[name] = self.leaf(values, requires_grad=True, name=name)
        return self._params[name]

    def params(self) -> Dict[str, Tensor]:
        return dict(self._params)

    # -- forward ops ----------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape[1] != b.shape[0]:
            raise ShapeError("matmul", [a.shape, b.shape])
        return self._record("matmul", [a, b], a.values @ b.values)

    def spmm_const(self, operator, x: Tensor) -> Tensor:
        """Product with a constant sparse operator (no gradient through it)"""
        matrix = _as_sparse(operator, x.values.dtype)
        if matrix.shape[1] != x.shape[0]:
            raise ShapeError("spmm_const", [matrix.shape, x.shape])
        value = np.asarray(matrix @ x.values)
        return self._record("spmm_const", [x], value, cache={"matrix": matrix})

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise sum; ``b`` may also be a single row added to every row"""
        broadcast = a.shape != b.shape
        if broadcast and b.shape != (1, a.shape[1]):
            raise ShapeError("add", [a.shape, b.shape])
        return self._record("add", [a, b], a.values + b.values, cache={"broadcast": broadcast})

    def relu(self, x: Tensor) -> Tensor:
        return self._record("relu", [x], np.maximum(x.values, 0))

    def dropout(
        self,
        x: Tensor,
        p: float,
        rng: Optional[np.random.Generator] = None,
        mask: Optional[np.ndarray] = None,
    ) -> Tensor:
        """
        Inverted dropout: kept entries are scaled by 1 / (1 - p)

        Args:
            x: Input tensor
            p: Drop probability in [0, 1)
            rng: Generator drawing the keep mask
            mask: Explicit 0/1 keep mask (overrides ``rng``)
        """
        if not 0.0 <= p < 1.0:
            raise ShapeError("dropout", [x.shape], f"drop probability {p} outside [0, 1)")
        dtype = x.values.dtype
        if mask is None:
            if rng is None:
                raise ShapeError("dropout", [x.shape], "an rng or an explicit mask is required")
            mask = rng.random(x.shape) >= p
        mask = np.asarray(mask)
        if mask.shape != x.shape:
            raise ShapeError("dropout", [x.shape, mask.shape])
        scaled = mask.astype(dtype) / dtype.type(1.0 - p)
        return self._record("dropout", [x], x.values * scaled, cache={"mask": scaled})

    def row_l2_normalize(self, x: Tensor) -> Tensor:
        norms = np.sqrt(np.sum(x.values * x.values, axis=1, keepdims=True))
        clamped = np.maximum(norms, x.values.dtype.type(NORM_EPS))
        return self._record(
            "row_l2_normalize", [x], x.values / clamped,
            cache={"norms": clamped, "active": norms > NORM_EPS},
        )

    def mse_mean(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ShapeError("mse_mean", [a.shape, b.shape])
        diff = a.values - b.values
        value = np.full((1, 1), np.mean(diff * diff), dtype=diff.dtype)
        return self._record("mse_mean", [a, b], value)

    def gram_rows(self, z: Tensor) -> Tensor:
        return self._record("gram_rows", [z], z.values @ z.values.T)

    def gram_cols(self, z: Tensor) -> Tensor:
        return self._record("gram_cols", [z], z.values.T @ z.values)

    def sub_identity(self, m: Tensor) -> Tensor:
        if m.shape[0] != m.shape[1]:
            raise ShapeError("sub_identity", [m.shape], "matrix must be square")
        return self._record(
            "sub_identity", [m], m.values - np.eye(m.shape[0], dtype=m.values.dtype)
        )

    def frob_norm(self, m: Tensor) -> Tensor:
        value = np.full((1, 1), np.sqrt(np.sum(m.values * m.values)), dtype=m.values.dtype)
        return self._record("frob_norm", [m], value)

    def scale(self, x: Tensor, factor: float) -> Tensor:
        factor = x.values.dtype.type(factor)
        return self._record("scale", [x], x.values * factor, cache={"factor": factor})

    def mean_pair(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ShapeError("mean_pair", [a.shape, b.shape])
        half = a.values.dtype.type(0.5)
        return self._record("mean_pair", [a, b], (a.values + b.values) * half)

    # -- backward -------------------------------------------------------

    def backward(self, loss: Tensor) -> Dict[int, np.ndarray]:
        """
        Back-propagate from a scalar loss

        Args:
            loss: 1x1 tensor recorded on this tape

        Returns:
            Gradients keyed by leaf node id, for leaves that require them
        """
        if loss.tape is not self:
            raise ShapeError("backward", [loss.shape], "loss recorded on a different tape")
        if loss.shape != (1, 1):
            raise ShapeError("backward", [loss.shape], "loss must be a 1x1 tensor")

        grads: Dict[int, np.ndarray] = {loss.node_id: np.ones((1, 1), dtype=loss.values.dtype)}
        leaves: Dict[int, np.ndarray] = {}
        for node in reversed(self.nodes[:loss.node_id + 1]):
            upstream = grads.pop(node.node_id, None)
            if upstream is None or not node.requires_grad:
                continue
            if node.kind == "leaf":
                leaves[node.node_id] = upstream
                continue
            inputs = [self.nodes[i] for i in node.inputs]
            rule = BACKWARD_RULES[node.kind]
            for inp, g in zip(inputs, rule(node, upstream, inputs)):
                if g is None or not inp.requires_grad:
                    continue
                if inp.node_id in grads:
                    grads[inp.node_id] = grads[inp.node_id] + g
                else:
                    grads[inp.node_id] = g
                    self.meter.allocate(g.nbytes, "grad")
            if node.node_id != loss.node_id:
                self.meter.release(upstream.nbytes)

        self.grads = leaves
        return dict(leaves)

    def param_grads(self) -> Dict[str, np.ndarray]:
        """Gradients of the named parameters after :meth:`backward`"""
        result = {}
        for name, tensor in self._params.items():
            g = self.grads.get(tensor.node_id)
            result[name] = g if g is not None else np.zeros_like(tensor.values)
        return result


# -- backward rules -----------------------------------------------------
# Each rule maps (node, upstream gradient, input nodes) to one gradient per
# input (None where no gradient flows).

def _matmul_backward(node, g, inputs):
    a, b = inputs
    return g @ b.value.T, a.value.T @ g


def _spmm_backward(node, g, inputs):
    return (np.asarray(node.cache["matrix"].T @ g),)


def _add_backward(node, g, inputs):
    if node.cache["broadcast"]:
        return g, g.sum(axis=0, keepdims=True)
    return g, g


def _relu_backward(node, g, inputs):
    return (g * (inputs[0].value > 0),)


def _dropout_backward(node, g, inputs):
    return (g * node.cache["mask"],)


def _row_l2_normalize_backward(node, g, inputs):
    y = node.value
    norms = node.cache["norms"]
    grad = (g - y * np.sum(y * g, axis=1, keepdims=True)) / norms
    inactive = ~node.cache["active"].ravel()
    if inactive.any():
        grad[inactive] = g[inactive] / norms[inactive]
    return (grad,)


def _mse_mean_backward(node, g, inputs):
    a, b = inputs
    diff = a.value - b.value
    da = diff * (2.0 * g[0, 0] / diff.size)
    return da, -da


def _gram_rows_backward(node, g, inputs):
    return ((g + g.T) @ inputs[0].value,)


def _gram_cols_backward(node, g, inputs):
    return (inputs[0].value @ (g + g.T),)


def _sub_identity_backward(node, g, inputs):
    return (g,)


def _frob_norm_backward(node, g, inputs):
    m = inputs[0].value
    norm = node.value[0, 0]
    if norm == 0:
        return (np.zeros_like(m),)
    return (m * (g[0, 0] / norm),)


def _scale_backward(node, g, inputs):
    return (g * node.cache["factor"],)


def _mean_pair_backward(node, g, inputs):
    half = g * g.dtype.type(0.5)
    return half, half


BACKWARD_RULES: Dict[str, Callable] = {
    "matmul": _matmul_backward,
    "spmm_const": _spmm_backward,
    "add": _add_backward,
    "relu": _relu_backward,
    "dropout": _dropout_backward,
    "row_l2_normalize": _row_l2_normalize_backward,
    "mse_mean": _mse_mean_backward,
    "gram_rows": _gram_rows_backward,
    "gram_cols": _gram_cols_backward,
    "sub_identity": _sub_identity_backward,
    "frob_norm": _frob_norm_backward,
    "scale": _scale_backward,
    "mean_pair": _mean_pair_backward,
}
