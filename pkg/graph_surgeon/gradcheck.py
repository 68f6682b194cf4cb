"""
Finite-difference verification of the tape's backward rules

Analytic gradients from :meth:`Tape.backward` are compared against central
differences in 64-bit arithmetic. Coordinates where a perturbation crosses
a non-differentiable point (a relu sign flip, a Frobenius norm at zero) are
skipped and reported instead of compared.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .exceptions import GradCheckFailure, ShapeError
from .graph import build_graph, normalize_adjacency
from .tape import Tape, Tensor

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-5
DEFAULT_TOLERANCE = 1e-4

Builder = Callable[[Tape, Dict[str, Tensor], np.random.Generator], Tensor]


@dataclass
class GradCheckResult:
    """
    Outcome of one gradient check

    Attributes:
        max_rel_error: Largest |analytic - numeric| / max(1, |analytic|)
        location: (input name, index) of the largest error
        checked: Number of coordinates compared
        skipped: (input name, index, reason) for coordinates not compared
    """

    max_rel_error: float = 0.0
    location: Optional[Tuple[str, Tuple[int, ...]]] = None
    checked: int = 0
    skipped: List[Tuple[str, Tuple[int, ...], str]] = field(default_factory=list)

    def passed(self, tolerance: float = DEFAULT_TOLERANCE) -> bool:
        return self.max_rel_error <= tolerance

    def merge(self, other: "GradCheckResult") -> "GradCheckResult":
        worse = other if other.max_rel_error > self.max_rel_error else self
        return GradCheckResult(
            max_rel_error=worse.max_rel_error,
            location=worse.location,
            checked=self.checked + other.checked,
            skipped=self.skipped + other.skipped,
        )


def _evaluate(builder: Builder, inputs: Dict[str, np.ndarray], seed: int) -> Tuple[Tape, Tensor]:
    tape = Tape()
    tensors = {name: tape.param(name, array.copy()) for name, array in inputs.items()}
    loss = builder(tape, tensors, np.random.default_rng(seed))
    if loss.shape != (1, 1):
        raise ShapeError("grad_check", [loss.shape], "builder must return a 1x1 loss")
    return tape, loss


def _kink_signature(tape: Tape, epsilon: float):
    relu_masks = []
    near_zero_norm = False
    for node in tape.nodes:
        if node.kind == "relu":
            relu_masks.append(tape.nodes[node.inputs[0]].value > 0)
        elif node.kind == "frob_norm" and node.value[0, 0] <= 2 * epsilon:
            near_zero_norm = True
    return relu_masks, near_zero_norm


def _kink_reason(base, perturbed) -> Optional[str]:
    base_masks, base_norm = base
    for masks, near_zero_norm in perturbed:
        if base_norm or near_zero_norm:
            return "frob_norm evaluated at zero"
        for before, after in zip(base_masks, masks):
            if not np.array_equal(before, after):
                return "relu input within epsilon of 0"
    return None


def grad_check(
    builder: Builder,
    inputs: Dict[str, np.ndarray],
    epsilon: float = DEFAULT_EPSILON,
    seed: int = 0,
) -> GradCheckResult:
    """
    Compare analytic and central-difference gradients of a scalar graph

    The builder is called once for the analytic pass and twice per input
    coordinate, each time with a fresh generator from ``seed`` so random
    choices such as dropout masks repeat exactly.

    Args:
        builder: Records a computation on the tape from the named input
            tensors and returns its 1x1 loss
        inputs: Named input matrices (converted to float64)
        epsilon: Central-difference step
        seed: Seed for the builder's generator

    Returns:
        Worst relative error and the list of skipped coordinates
    """
    arrays = {name: np.array(value, dtype=np.float64, ndmin=2) for name, value in inputs.items()}

    base_tape, base_loss = _evaluate(builder, arrays, seed)
    base_tape.backward(base_loss)
    analytic = base_tape.param_grads()
    base_signature = _kink_signature(base_tape, epsilon)

    result = GradCheckResult()
    for name, array in arrays.items():
        for index in np.ndindex(array.shape):
            original = array[index]
            array[index] = original + epsilon
            plus_tape, plus = _evaluate(builder, arrays, seed)
            array[index] = original - epsilon
            minus_tape, minus = _evaluate(builder, arrays, seed)
            array[index] = original

            reason = _kink_reason(
                base_signature,
                [_kink_signature(plus_tape, epsilon), _kink_signature(minus_tape, epsilon)],
            )
            if reason:
                result.skipped.append((name, index, reason))
                continue

            numeric = (plus.item() - minus.item()) / (2.0 * epsilon)
            exact = float(analytic[name][index])
            rel_error = abs(exact - numeric) / max(1.0, abs(exact))
            result.checked += 1
            if result.location is None or rel_error > result.max_rel_error:
                result.max_rel_error = rel_error
                result.location = (name, index)
    return result


# -- op suite -------------------------------------------------------------

def _reduce(tape: Tape, out: Tensor, rng: np.random.Generator) -> Tensor:
    # Fixed random target keeps every output coordinate in the loss
    target = tape.leaf(rng.standard_normal(out.shape))
    return tape.mse_mean(out, target)


def _small_graph(num_nodes: int = 6):
    edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)]
    return build_graph(edges, num_nodes)


def _loss_graph_builder(mode: str, constraint: str) -> Builder:
    from .layers import AugmenterParams, EncoderParams, augment_pair, encode
    from .objective import LossConfig, total_loss, unit_rows

    adjacency = normalize_adjacency(_small_graph())
    loss_config = LossConfig(gamma=0.7, constraint_mode=constraint)

    def builder(tape, t, rng):
        augmenter = AugmenterParams(
            t["augmenter.w1"].values, t["augmenter.b1"].values,
            t["augmenter.w2"].values, t["augmenter.b2"].values,
            dropout_p=0.2,
        )
        encoder = EncoderParams(
            weights=[t["encoder.w1"].values, t["encoder.w2"].values],
            dropout_p=0.2,
            residual=True,
        )
        if mode == "pre":
            v1, v2 = augment_pair(tape, t["x"], augmenter, True, rng)
            z1 = encode(tape, adjacency, v1, encoder, True, rng)
            z2 = encode(tape, adjacency, v2, encoder, True, rng)
        else:
            z = encode(tape, adjacency, t["x"], encoder, True, rng)
            z1, z2 = augment_pair(tape, z, augmenter, True, rng)
        terms = total_loss(tape, unit_rows(tape, z1), unit_rows(tape, z2), loss_config)
        return terms.total

    return builder


def _loss_graph_inputs(mode: str, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    # 6 nodes x 4 features; pre: aug 4->3, enc 3->3->3; post: enc 4->3->3, aug 3->3
    aug_in = 4 if mode == "pre" else 3
    enc_in = 3 if mode == "pre" else 4
    return {
        "x": rng.standard_normal((6, 4)),
        "augmenter.w1": rng.standard_normal((aug_in, 3)) * 0.5,
        "augmenter.b1": rng.standard_normal((1, 3)) * 0.1,
        "augmenter.w2": rng.standard_normal((aug_in, 3)) * 0.5,
        "augmenter.b2": rng.standard_normal((1, 3)) * 0.1,
        "encoder.w1": rng.standard_normal((enc_in, 3)) * 0.5,
        "encoder.w2": rng.standard_normal((3, 3)) * 0.5,
    }


InputFactory = Callable[[np.random.Generator], Dict[str, np.ndarray]]


def _op_cases() -> List[Tuple[str, Builder, InputFactory]]:
    adjacency = normalize_adjacency(_small_graph())

    def normal(**shapes):
        return lambda rng: {name: rng.standard_normal(shape) for name, shape in shapes.items()}

    return [
        ("matmul", lambda tp, t, r: _reduce(tp, tp.matmul(t["a"], t["b"]), r),
         normal(a=(3, 4), b=(4, 2))),
        ("spmm_const", lambda tp, t, r: _reduce(tp, tp.spmm_const(adjacency, t["x"]), r),
         normal(x=(6, 3))),
        ("add", lambda tp, t, r: _reduce(tp, tp.add(t["a"], t["b"]), r),
         normal(a=(4, 3), b=(4, 3))),
        ("add_row", lambda tp, t, r: _reduce(tp, tp.add(t["a"], t["b"]), r),
         normal(a=(4, 3), b=(1, 3))),
        ("relu", lambda tp, t, r: _reduce(tp, tp.relu(t["x"]), r),
         normal(x=(4, 3))),
        ("dropout", lambda tp, t, r: _reduce(tp, tp.dropout(t["x"], 0.3, r), r),
         normal(x=(4, 3))),
        ("row_l2_normalize", lambda tp, t, r: _reduce(tp, tp.row_l2_normalize(t["x"]), r),
         normal(x=(5, 4))),
        ("mse_mean", lambda tp, t, r: tp.mse_mean(t["a"], t["b"]),
         normal(a=(4, 3), b=(4, 3))),
        ("gram_rows", lambda tp, t, r: _reduce(tp, tp.gram_rows(t["z"]), r),
         normal(z=(4, 3))),
        ("gram_cols", lambda tp, t, r: _reduce(tp, tp.gram_cols(t["z"]), r),
         normal(z=(4, 3))),
        ("sub_identity", lambda tp, t, r: _reduce(tp, tp.sub_identity(t["m"]), r),
         normal(m=(3, 3))),
        ("frob_norm", lambda tp, t, r: tp.frob_norm(t["m"]),
         normal(m=(3, 4))),
        ("scale", lambda tp, t, r: _reduce(tp, tp.scale(t["x"], 2.5), r),
         normal(x=(3, 3))),
        ("mean_pair", lambda tp, t, r: _reduce(tp, tp.mean_pair(t["a"], t["b"]), r),
         normal(a=(3, 4), b=(3, 4))),
        ("loss_graph_pre_row", _loss_graph_builder("pre", "row"),
         lambda rng: _loss_graph_inputs("pre", rng)),
        ("loss_graph_pre_column", _loss_graph_builder("pre", "column"),
         lambda rng: _loss_graph_inputs("pre", rng)),
        ("loss_graph_post_row", _loss_graph_builder("post", "row"),
         lambda rng: _loss_graph_inputs("post", rng)),
        ("loss_graph_post_column", _loss_graph_builder("post", "column"),
         lambda rng: _loss_graph_inputs("post", rng)),
    ]


@dataclass
class OpCheck:
    op: str
    result: GradCheckResult
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.result.passed(self.tolerance)

    def format(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return (f"op={self.op} max_rel_err={self.result.max_rel_error:.3e} "
                f"checked={self.result.checked} skipped={len(self.result.skipped)} status={status}")


@dataclass
class GradCheckReport:
    checks: List[OpCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> List[OpCheck]:
        return [check for check in self.checks if not check.passed]

    def lines(self) -> List[str]:
        return [check.format() for check in self.checks]

    def raise_for_failure(self) -> None:
        failed = self.failures()
        if failed:
            names = ", ".join(check.op for check in failed)
            raise GradCheckFailure(f"gradient check failed for: {names}", op=failed[0].op)


def run_gradcheck_suite(
    seeds: int = 5,
    epsilon: float = DEFAULT_EPSILON,
    tolerance: float = DEFAULT_TOLERANCE,
) -> GradCheckReport:
    """
    Check every op of the tape vocabulary and the end-to-end loss graph

    Args:
        seeds: Number of random instances per case
        epsilon: Central-difference step
        tolerance: Maximum accepted relative error

    Returns:
        One :class:`OpCheck` per case, worst result over all seeds
    """
    report = GradCheckReport()
    for op, builder, make_inputs in _op_cases():
        combined = GradCheckResult()
        for seed in range(seeds):
            inputs = make_inputs(np.random.default_rng(seed))
            combined = combined.merge(grad_check(builder, inputs, epsilon=epsilon, seed=seed))
        check = OpCheck(op, combined, tolerance)
        logger.debug(check.format())
        report.checks.append(check)
    return report
