"""
Linear evaluation of frozen embeddings

A logistic-regression probe is fit by full-batch gradient descent on the
training split only and scored by accuracy (binary and multi-class tasks)
or micro-averaged ROC-AUC (multi-label tasks).
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional

import numpy as np
from scipy.special import expit, softmax
from sklearn.metrics import roc_auc_score

from .exceptions import (
    ConfigError,
    DatasetFormatError,
    ModeMismatchError,
    ShapeError,
    SurgeonInputError,
)

logger = logging.getLogger(__name__)


class TaskKind(str, Enum):
    BINARY = "binary"
    MULTICLASS = "multiclass"
    MULTILABEL = "multilabel"

    @property
    def metric(self) -> str:
        return "roc_auc" if self is TaskKind.MULTILABEL else "accuracy"


@dataclass(eq=False)
class LabelSet:
    """
    Node labels of one task

    Attributes:
        task: Binary, multi-class or multi-label classification
        num_classes: C (2 for binary tasks)
        labels: Class index per node, or an N x C 0/1 matrix (multi-label)
    """

    task: TaskKind
    num_classes: int
    labels: np.ndarray

    def __post_init__(self):
        self.task = TaskKind(self.task)
        labels = np.asarray(self.labels)
        if self.task is TaskKind.BINARY and self.num_classes != 2:
            raise DatasetFormatError(f"binary tasks have 2 classes, got {self.num_classes}")
        if self.num_classes < 1:
            raise DatasetFormatError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.task is TaskKind.MULTILABEL:
            if labels.ndim != 2 or labels.shape[1] != self.num_classes:
                raise DatasetFormatError(
                    f"multi-label targets must be N x {self.num_classes}, got {labels.shape}"
                )
            if not np.isin(labels, (0, 1)).all():
                raise DatasetFormatError("multi-label targets must be 0/1")
            labels = labels.astype(np.int8)
        else:
            if labels.ndim != 1:
                raise DatasetFormatError(f"class labels must be a vector, got shape {labels.shape}")
            labels = labels.astype(np.int64)
            if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
                raise DatasetFormatError(f"class labels must lie in [0, {self.num_classes})")
        labels.setflags(write=False)
        self.labels = labels

    @property
    def num_nodes(self) -> int:
        return int(self.labels.shape[0])

    def targets(self) -> np.ndarray:
        """N x C float targets (one-hot for single-label tasks)"""
        if self.task is TaskKind.MULTILABEL:
            return self.labels.astype(np.float64)
        return np.eye(self.num_classes)[self.labels]


@dataclass
class ProbeConfig:
    epochs: int = 100
    lr: float = 0.01
    standardize: bool = True

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"probe epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigError(f"probe lr must be > 0, got {self.lr}")


@dataclass(eq=False)
class ProbeModel:
    weights: np.ndarray
    bias: np.ndarray
    task: TaskKind
    center: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None

    def transform(self, embeddings: np.ndarray) -> np.ndarray:
        x = np.asarray(embeddings, dtype=np.float64)
        if self.center is not None:
            x = (x - self.center) / self.scale
        return x

    def logits(self, embeddings: np.ndarray) -> np.ndarray:
        x = self.transform(embeddings)
        if x.shape[1] != self.weights.shape[0]:
            raise ShapeError("probe", [x.shape, self.weights.shape])
        return x @ self.weights + self.bias


@dataclass
class Metrics:
    """
    Probe score on one split

    Attributes:
        name: ``accuracy`` or ``roc_auc``
        value: Score (NaN when undefined)
        count: Number of evaluated nodes
        per_class: Per-class ROC-AUC for classes with both polarities
    """

    name: str
    value: float
    count: int
    per_class: Dict[int, float] = field(default_factory=dict)

    def results_line(self, split: str, seed: int) -> str:
        return f"metric={self.name} value={self.value:.6f} split={split} seed={seed}"


def _mask_indices(mask, num_nodes: int) -> np.ndarray:
    idx = np.asarray(mask)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    idx = idx.astype(np.int64)
    if idx.size == 0:
        raise SurgeonInputError("mask selects no nodes")
    if idx.min() < 0 or idx.max() >= num_nodes:
        raise SurgeonInputError(f"mask index outside [0, {num_nodes})")
    return idx


def fit_probe(
    embeddings: np.ndarray,
    labels: LabelSet,
    mask,
    epochs: int = 100,
    lr: float = 0.01,
    standardize: bool = True,
) -> ProbeModel:
    """
    Fit a logistic-regression probe on the masked rows

    Softmax cross-entropy for multi-class tasks, per-class sigmoid
    cross-entropy otherwise. Columns are z-scored with train statistics
    when ``standardize`` is set. The embeddings are never modified.

    Args:
        embeddings: N x F frozen embeddings
        labels: Labels of all N nodes
        mask: Training node indices (or boolean mask)
        epochs: Gradient-descent iterations
        lr: Step size

    Returns:
        Fitted probe
    """
    if embeddings.ndim != 2 or embeddings.shape[0] != labels.num_nodes:
        raise ShapeError("fit_probe", [embeddings.shape, (labels.num_nodes,)],
                         "one embedding row per labelled node")
    idx = _mask_indices(mask, labels.num_nodes)
    x = np.asarray(embeddings, dtype=np.float64)[idx]
    y = labels.targets()[idx]

    present = y.sum(axis=0) > 0
    if not present.all():
        absent = np.flatnonzero(~present).tolist()
        logger.warning(f"Classes absent from the training split: {absent}")

    center = scale = None
    if standardize:
        center = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale == 0] = 1.0
        x = (x - center) / scale

    n = x.shape[0]
    weights = np.zeros((x.shape[1], labels.num_classes))
    bias = np.zeros(labels.num_classes)
    for _ in range(epochs):
        logits = x @ weights + bias
        if labels.task is TaskKind.MULTICLASS:
            probs = softmax(logits, axis=1)
        else:
            probs = expit(logits)
        residual = (probs - y) / n
        weights -= lr * (x.T @ residual)
        bias -= lr * residual.sum(axis=0)

    return ProbeModel(weights=weights, bias=bias, task=labels.task, center=center, scale=scale)


def micro_roc_auc(targets: np.ndarray, scores: np.ndarray) -> Metrics:
    """
    Micro-averaged ROC-AUC over all (node, class) pairs

    Per-class values are reported only for classes with both polarities.
    """
    targets = np.asarray(targets)
    scores = np.asarray(scores, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets.reshape(-1, 1)
        scores = scores.reshape(-1, 1)
    per_class = {}
    for c in range(targets.shape[1]):
        column = targets[:, c]
        if column.min() == column.max():
            logger.warning(f"Class {c} has a single polarity in the mask; "
                           "excluded from per-class AUC")
            continue
        per_class[c] = float(roc_auc_score(column, scores[:, c]))
    flat = targets.ravel()
    if flat.min() == flat.max():
        logger.warning("ROC-AUC undefined: all targets share one polarity")
        value = float("nan")
    else:
        value = float(roc_auc_score(flat, scores.ravel()))
    return Metrics(name="roc_auc", value=value, count=int(targets.shape[0]), per_class=per_class)


def evaluate(probe: ProbeModel, embeddings: np.ndarray, labels: LabelSet, mask) -> Metrics:
    """
    Score a probe on the masked rows

    Accuracy uses argmax predictions (ties go to the lowest class index).

    Raises:
        ModeMismatchError: If the probe was fit for another task kind
    """
    if probe.task is not labels.task:
        raise ModeMismatchError(f"probe was fit for a {probe.task.value} task but the labels "
                                f"are {labels.task.value}")
    idx = _mask_indices(mask, labels.num_nodes)
    logits = probe.logits(np.asarray(embeddings)[idx])
    if labels.task is TaskKind.MULTILABEL:
        return micro_roc_auc(labels.labels[idx], logits)
    predictions = np.argmax(logits, axis=1)
    accuracy = float(np.mean(predictions == labels.labels[idx]))
    return Metrics(name="accuracy", value=accuracy, count=int(idx.size))


def stable_rank(z: np.ndarray) -> float:
    """||Z||_F^2 / ||Z||_2^2; 0 for an all-zero matrix"""
    z = np.asarray(z, dtype=np.float64)
    spectral = np.linalg.norm(z, ord=2)
    if spectral == 0:
        return 0.0
    return float(np.sum(z * z) / spectral ** 2)
