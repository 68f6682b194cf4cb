"""
Runtime and memory benchmarks

Every cell trains a fresh model and reads wall time per epoch and the
tape's allocation accounting. Warmup epochs are excluded from timing.
"""

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from typing import List, Sequence, Tuple

import numpy as np

from .dataio import DatasetBundle, SbmConfig, generate_sbm
from .exceptions import ConfigError
from .objective import ConstraintMode
from .probe import ProbeConfig, evaluate, fit_probe
from .trainer import AugmentMode, BatchKind, GraphSurgeon, TrainConfig

logger = logging.getLogger(__name__)

MIN_WARMUP = 3
MIN_TIMED_EPOCHS = 10


@dataclass
class BenchConfig:
    """
    Attributes:
        epochs: Timed epochs per cell
        warmup: Untimed epochs before timing starts
        modes: Augmentation placements to run
        constraints: Constraint flavors to run
        scaling: Node counts for the constraint memory sweep (empty to skip)
        batch_sizes: Batch sizes for the neighbor-sampling sweep (empty to skip)
        embed_dims: Embedding widths for the embedding-size sweep (empty to skip)
    """

    epochs: int = 10
    warmup: int = 3
    modes: Tuple[AugmentMode, ...] = (AugmentMode.PRE, AugmentMode.POST)
    constraints: Tuple[ConstraintMode, ...] = (ConstraintMode.ROW, ConstraintMode.COLUMN)
    scaling: Tuple[int, ...] = ()
    batch_sizes: Tuple[int, ...] = ()
    embed_dims: Tuple[int, ...] = ()

    def validate(self) -> None:
        if self.warmup < MIN_WARMUP:
            raise ConfigError(f"bench warmup must be >= {MIN_WARMUP} epochs, got {self.warmup}")
        if self.epochs < MIN_TIMED_EPOCHS:
            raise ConfigError(f"bench must time >= {MIN_TIMED_EPOCHS} epochs, got {self.epochs}")
        self.modes = tuple(AugmentMode(m) for m in self.modes)
        self.constraints = tuple(ConstraintMode(c) for c in self.constraints)
        if any(n < 3 for n in self.scaling):
            raise ConfigError("scaling node counts must be >= 3")
        if any(b < 1 for b in self.batch_sizes):
            raise ConfigError("batch sizes must be >= 1")
        if any(d < 1 for d in self.embed_dims):
            raise ConfigError("embedding sizes must be >= 1")


@dataclass
class BenchRow:
    mode: str
    constraint: str
    epochs_timed: int
    mean_ms: float
    peak_bytes: int
    constraint_bytes: int
    encoder_forwards: int


@dataclass
class ScalingRow:
    num_nodes: int
    constraint: str
    constraint_bytes: int
    peak_bytes: int


@dataclass
class BatchSweepRow:
    batch_size: int
    metric: str
    value: float
    mean_ms: float


@dataclass
class EmbedSizeRow:
    embed_dim: int
    metric: str
    value: float
    mean_ms: float


def _to_csv(header: Sequence[str], rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([getattr(row, name) for name in header])
    return buffer.getvalue()


@dataclass
class BenchReport:
    rows: List[BenchRow] = field(default_factory=list)
    scaling: List[ScalingRow] = field(default_factory=list)
    batch_sizes: List[BatchSweepRow] = field(default_factory=list)
    embed_dims: List[EmbedSizeRow] = field(default_factory=list)

    def row(self, mode: str, constraint: str) -> BenchRow:
        for row in self.rows:
            if row.mode == mode and row.constraint == constraint:
                return row
        raise KeyError((mode, constraint))

    def table(self) -> str:
        lines = [f"{'mode':<6}{'constraint':<12}{'epochs':>8}{'ms/epoch':>12}"
                 f"{'peak_bytes':>14}{'gram_bytes':>14}{'enc_fwd':>9}"]
        for r in self.rows:
            lines.append(f"{r.mode:<6}{r.constraint:<12}{r.epochs_timed:>8}{r.mean_ms:>12.2f}"
                         f"{r.peak_bytes:>14}{r.constraint_bytes:>14}{r.encoder_forwards:>9}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        return _to_csv([f for f in BenchRow.__dataclass_fields__], self.rows)

    def scaling_csv(self) -> str:
        return _to_csv([f for f in ScalingRow.__dataclass_fields__], self.scaling)

    def batch_sizes_csv(self) -> str:
        return _to_csv([f for f in BatchSweepRow.__dataclass_fields__], self.batch_sizes)

    def embed_dims_csv(self) -> str:
        return _to_csv([f for f in EmbedSizeRow.__dataclass_fields__], self.embed_dims)


def _cell_config(train: TrainConfig, mode, constraint, epochs: int) -> TrainConfig:
    return replace(
        train,
        mode=AugmentMode(mode),
        epochs=epochs,
        loss=replace(train.loss, constraint_mode=ConstraintMode(constraint)),
        record_timing=True,
    )


def run_bench(dataset: DatasetBundle, train: TrainConfig, bench: BenchConfig) -> BenchReport:
    """
    Time every {mode} x {constraint} cell on ``dataset``

    Returns:
        One row per cell with the mean wall time of the timed epochs and the
        peak and constraint-Gram allocation over them
    """
    bench.validate()
    report = BenchReport()
    for mode in bench.modes:
        for constraint in bench.constraints:
            cfg = _cell_config(train, mode, constraint, bench.warmup + bench.epochs)
            _, history = GraphSurgeon(cfg).fit(dataset)
            timed = history.records[bench.warmup:]
            row = BenchRow(
                mode=mode.value,
                constraint=constraint.value,
                epochs_timed=len(timed),
                mean_ms=float(np.mean([r.ms for r in timed])),
                peak_bytes=max(r.peak_bytes for r in timed),
                constraint_bytes=max(r.constraint_bytes for r in timed),
                encoder_forwards=timed[-1].encoder_forwards,
            )
            logger.info(f"bench {row.mode}/{row.constraint}: {row.mean_ms:.2f} ms/epoch, "
                        f"peak {row.peak_bytes} bytes")
            report.rows.append(row)
    return report


def constraint_scaling(
    sizes: Sequence[int],
    train: TrainConfig,
    sbm: SbmConfig,
    constraints: Sequence[ConstraintMode] = (ConstraintMode.ROW, ConstraintMode.COLUMN),
) -> List[ScalingRow]:
    """
    Constraint Gram allocation for graphs of ``sizes`` nodes

    Each size generates a 4-block SBM with the density and features of
    ``sbm`` and trains one full-batch epoch per constraint flavor.
    """
    rows = []
    for n in sizes:
        per_block = max(1, n // sbm.blocks)
        dataset = generate_sbm(replace(sbm, nodes_per_block=per_block))
        for constraint in constraints:
            cfg = _cell_config(train, train.mode, constraint, 1)
            cfg.batch = replace(cfg.batch, kind=BatchKind.FULL)
            _, history = GraphSurgeon(cfg).fit(dataset)
            record = history.records[-1]
            rows.append(ScalingRow(dataset.graph.num_nodes, ConstraintMode(constraint).value,
                                   record.constraint_bytes, record.peak_bytes))
            logger.info(f"scaling N={dataset.graph.num_nodes} {rows[-1].constraint}: "
                        f"{record.constraint_bytes} constraint bytes")
    return rows


def _train_and_score(dataset: DatasetBundle, cfg: TrainConfig, probe: ProbeConfig):
    trainer = GraphSurgeon(cfg)
    model, history = trainer.fit(dataset)
    embeddings = trainer.embed(dataset, model)
    classifier = fit_probe(embeddings, dataset.labels, dataset.splits.train,
                           epochs=probe.epochs, lr=probe.lr, standardize=probe.standardize)
    metrics = evaluate(classifier, embeddings, dataset.labels, dataset.splits.test)
    return metrics, float(np.mean(history.column("ms")))


def batch_size_sweep(
    dataset: DatasetBundle,
    train: TrainConfig,
    batch_sizes: Sequence[int],
    probe: ProbeConfig,
) -> List[BatchSweepRow]:
    """Probe test score of neighbor-sampled training for each batch size"""
    rows = []
    for size in batch_sizes:
        cfg = replace(train, batch=replace(train.batch, kind=BatchKind.NEIGHBOR, batch_size=size))
        metrics, mean_ms = _train_and_score(dataset, cfg, probe)
        rows.append(BatchSweepRow(size, metrics.name, metrics.value, mean_ms))
        logger.info(f"batch size {size}: {metrics.name}={metrics.value:.4f}")
    return rows


def embedding_size_sweep(
    dataset: DatasetBundle,
    train: TrainConfig,
    embed_dims: Sequence[int],
    probe: ProbeConfig,
) -> List[EmbedSizeRow]:
    """
    Probe test score for each embedding width F_L

    The hidden width follows F_L unless ``train.hidden_dim`` is set; the
    augmenter width follows its default for the configured mode.
    """
    rows = []
    for dim in embed_dims:
        metrics, mean_ms = _train_and_score(dataset, replace(train, embed_dim=dim), probe)
        rows.append(EmbedSizeRow(dim, metrics.name, metrics.value, mean_ms))
        logger.info(f"embedding size {dim}: {metrics.name}={metrics.value:.4f}")
    return rows
