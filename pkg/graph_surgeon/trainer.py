"""
Joint training of the encoder and both augmentation heads

:class:`GraphSurgeon` owns one run: its configuration, the parameters,
the Adam state and the random streams. Each step records a fresh tape,
computes the loss on two learned views and updates every parameter group
at once.
"""

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np

from .exceptions import ConfigError, ModeMismatchError, NumericalError, ShapeError
from .graph import Graph, NormalizedAdjacency, SampledBlock, neighbor_sample, normalize_adjacency
from .layers import AugmenterParams, EncoderParams, Propagation, augment_pair, encode
from .objective import LossConfig, total_loss, unit_rows
from .optim import Adam
from .tape import Tape

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "loss", "invariance", "constraint1", "constraint2", "ms", "peak_bytes")

PRECISIONS = {"float32": np.float32, "float64": np.float64}

# Adam step size per augmentation mode when lr is unset
DEFAULT_LR = {"pre": 1e-3, "post": 1e-4}


class AugmentMode(str, Enum):
    PRE = "pre"
    POST = "post"


class BatchKind(str, Enum):
    FULL = "full"
    NEIGHBOR = "neighbor"


class PostHead(str, Enum):
    MEAN = "mean"
    HEAD1 = "head1"
    HEAD2 = "head2"


class PreEmbedInput(str, Enum):
    AUTO = "auto"
    RAW = "raw"
    AUGMENTED = "augmented"


@dataclass
class BatchConfig:
    """
    Batching of the training nodes

    Attributes:
        kind: ``full`` trains on the whole graph per step, ``neighbor`` on
            sampled blocks around shuffled seed batches
        fanouts: Neighbors sampled per layer, input layer first; ``None``
            or -1 keeps every neighbor
        batch_size: Seed nodes per block
    """

    kind: BatchKind = BatchKind.FULL
    fanouts: Tuple[Optional[int], ...] = (10, 10)
    batch_size: int = 1024

    def validate(self, num_layers: int) -> None:
        self.kind = BatchKind(self.kind)
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.kind is BatchKind.NEIGHBOR and len(self.fanouts) != num_layers:
            raise ConfigError(
                f"{len(self.fanouts)} fanouts given for an encoder with {num_layers} layers"
            )


@dataclass
class TrainConfig:
    mode: AugmentMode = AugmentMode.PRE
    epochs: int = 500
    lr: Optional[float] = None
    betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    batch: BatchConfig = field(default_factory=BatchConfig)
    aug_dim: Optional[int] = None
    embed_dim: int = 128
    hidden_dim: Optional[int] = None
    num_layers: int = 2
    loss: LossConfig = field(default_factory=LossConfig)
    augmenter_dropout: float = 0.2
    encoder_dropout: float = 0.2
    augmenter_bias: bool = True
    encoder_bias: bool = False
    residual: bool = True
    post_head: PostHead = PostHead.MEAN
    pre_embed_input: PreEmbedInput = PreEmbedInput.AUTO
    precision: str = "float32"
    seed: int = 0
    checkpoint_every: int = 10
    record_timing: bool = True

    def validate(self) -> None:
        self.mode = AugmentMode(self.mode)
        self.post_head = PostHead(self.post_head)
        self.pre_embed_input = PreEmbedInput(self.pre_embed_input)
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr is not None and self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {self.num_layers}")
        for name in ("aug_dim", "hidden_dim", "embed_dim"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        for name in ("augmenter_dropout", "encoder_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {getattr(self, name)}")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {sorted(PRECISIONS)}, "
                              f"got {self.precision!r}")
        if self.checkpoint_every < 1:
            raise ConfigError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        self.batch.validate(self.num_layers)
        self.loss.validate()

    @property
    def learning_rate(self) -> float:
        """``lr`` or the default step size of the configured mode"""
        return self.lr if self.lr is not None else DEFAULT_LR[AugmentMode(self.mode).value]

    @property
    def dtype(self):
        return PRECISIONS[self.precision]


@dataclass(eq=False)
class TrainedModel:
    """Parameters of a trained (or freshly initialized) model"""

    mode: AugmentMode
    augmenter: AugmenterParams
    encoder: EncoderParams

    def parameters(self) -> Dict[str, np.ndarray]:
        params = self.augmenter.parameters()
        params.update(self.encoder.parameters())
        return params

    @property
    def num_features(self) -> int:
        if self.mode is AugmentMode.PRE:
            return self.augmenter.in_dim
        return self.encoder.in_dim

    @property
    def embedding_dim(self) -> int:
        if self.mode is AugmentMode.PRE:
            return self.encoder.out_dim
        return self.augmenter.out_dim


@dataclass
class StepResult:
    loss: float
    invariance: float
    constraint1: float
    constraint2: float
    peak_bytes: int
    constraint_bytes: int
    encoder_forwards: int


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    invariance: float
    constraint1: float
    constraint2: float
    ms: float
    peak_bytes: int
    constraint_bytes: int = 0
    encoder_forwards: int = 0
    steps: int = 1

    def row(self) -> List[str]:
        return [
            str(self.epoch), repr(self.loss), repr(self.invariance), repr(self.constraint1),
            repr(self.constraint2), repr(self.ms), str(self.peak_bytes),
        ]


@dataclass
class TrainHistory:
    records: List[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(record, name) for record in self.records])

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for record in self.records:
            writer.writerow(record.row())
        return buffer.getvalue()


CheckpointCallback = Callable[[int, TrainedModel, EpochRecord], None]


class GraphSurgeon:
    """
    Self-supervised trainer with learned augmentations

    Args:
        config: Training configuration; validated on construction

    Example:
        >>> trainer = GraphSurgeon(TrainConfig(epochs=50, embed_dim=32))
        >>> model, history = trainer.fit(bundle)
        >>> embeddings = trainer.embed(bundle)
    """

    def __init__(self, config: Optional[TrainConfig] = None):
        self.config = config or TrainConfig()
        self.config.validate()
        init_seq, train_seq, sample_seq = np.random.SeedSequence(self.config.seed).spawn(3)
        self.init_rng = np.random.default_rng(init_seq)
        self.train_rng = np.random.default_rng(train_seq)
        self.sample_rng = np.random.default_rng(sample_seq)
        self.model: Optional[TrainedModel] = None
        self.optimizer = Adam(self.config.learning_rate, self.config.betas, self.config.adam_eps)
        self.last_op_counts: Dict[str, int] = {}

    # -- model construction --------------------------------------------

    def init_model(self, num_features: int) -> TrainedModel:
        """
        Initialize parameters for inputs with ``num_features`` columns

        Pre mode wires F -> D (augmenter) and D -> hidden -> F_L (encoder);
        post mode wires F -> hidden -> F_L (encoder) and F_L -> D (augmenter).
        """
        cfg = self.config
        hidden = cfg.hidden_dim or cfg.embed_dim
        augmenter_rng, encoder_rng = self.init_rng.spawn(2)
        if cfg.mode is AugmentMode.PRE:
            aug_in, aug_out = num_features, cfg.aug_dim or num_features
            encoder_dims = [aug_out] + [hidden] * (cfg.num_layers - 1) + [cfg.embed_dim]
        else:
            encoder_dims = [num_features] + [hidden] * (cfg.num_layers - 1) + [cfg.embed_dim]
            aug_in, aug_out = cfg.embed_dim, cfg.aug_dim or cfg.embed_dim
        augmenter = AugmenterParams.initialize(
            aug_in, aug_out, augmenter_rng,
            bias=cfg.augmenter_bias, dropout_p=cfg.augmenter_dropout, dtype=cfg.dtype,
        )
        encoder = EncoderParams.initialize(
            encoder_dims, encoder_rng,
            bias=cfg.encoder_bias, dropout_p=cfg.encoder_dropout,
            residual=cfg.residual, dtype=cfg.dtype,
        )
        self.model = TrainedModel(cfg.mode, augmenter, encoder)
        logger.debug(f"Initialized {cfg.mode.value} model: augmenter {aug_in}->{aug_out}, "
                     f"encoder {'->'.join(map(str, encoder_dims))}")
        return self.model

    def _require_model(self, model: Optional[TrainedModel]) -> TrainedModel:
        model = model or self.model
        if model is None:
            raise ModeMismatchError("no model: call fit() or init_model() first")
        if model.mode is not self.config.mode:
            raise ModeMismatchError(
                f"model was built for {model.mode.value} mode but the configuration "
                f"selects {self.config.mode.value}"
            )
        return model

    @staticmethod
    def _check_rows(propagation: Propagation, x: np.ndarray) -> None:
        if isinstance(propagation, SampledBlock):
            expected = len(propagation.input_nodes)
        else:
            expected = propagation.shape[1]
        if x.ndim != 2 or x.shape[0] != expected:
            raise ShapeError("train_step", [tuple(x.shape), (expected,)],
                             "feature rows must match the propagation input nodes")

    # -- training steps ------------------------------------------------

    def train_step_pre(
        self, propagation: Propagation, x: np.ndarray, model: Optional[TrainedModel] = None
    ) -> StepResult:
        """
        One pre-augmentation step: augment the features, encode both views

        Args:
            propagation: Full-graph adjacency or sampled block
            x: Feature rows of the propagation input nodes
            model: Parameters to update (defaults to the trainer's model)

        Returns:
            Loss terms and accounting of this step
        """
        if self.config.mode is not AugmentMode.PRE:
            raise ModeMismatchError("train_step_pre called with a post-mode configuration")
        model = self._require_model(model)
        self._check_rows(propagation, x)
        if x.shape[1] != model.augmenter.in_dim:
            raise ShapeError("train_step_pre", [x.shape, model.augmenter.w1.shape])

        tape = Tape()
        features = tape.leaf(x, name="x")
        v1, v2 = augment_pair(tape, features, model.augmenter, True, self.train_rng)
        z1 = encode(tape, propagation, v1, model.encoder, True, self.train_rng)
        z2 = encode(tape, propagation, v2, model.encoder, True, self.train_rng)
        return self._finish_step(tape, z1, z2, model, encoder_forwards=2)

    def train_step_post(
        self, propagation: Propagation, x: np.ndarray, model: Optional[TrainedModel] = None
    ) -> StepResult:
        """One post-augmentation step: encode once, augment the representation"""
        if self.config.mode is not AugmentMode.POST:
            raise ModeMismatchError("train_step_post called with a pre-mode configuration")
        model = self._require_model(model)
        self._check_rows(propagation, x)
        if x.shape[1] != model.encoder.in_dim:
            raise ShapeError("train_step_post", [x.shape, model.encoder.weights[0].shape])

        tape = Tape()
        features = tape.leaf(x, name="x")
        z = encode(tape, propagation, features, model.encoder, True, self.train_rng)
        z1, z2 = augment_pair(tape, z, model.augmenter, True, self.train_rng)
        return self._finish_step(tape, z1, z2, model, encoder_forwards=1)

    def train_step(self, propagation: Propagation, x: np.ndarray,
                   model: Optional[TrainedModel] = None) -> StepResult:
        if self.config.mode is AugmentMode.PRE:
            return self.train_step_pre(propagation, x, model)
        return self.train_step_post(propagation, x, model)

    def _finish_step(self, tape, z1, z2, model: TrainedModel, encoder_forwards: int) -> StepResult:
        terms = total_loss(tape, unit_rows(tape, z1), unit_rows(tape, z2), self.config.loss)
        values = terms.as_floats()
        for term, value in values.items():
            if not np.isfinite(value):
                raise NumericalError(f"non-finite {term} ({value})", term=term)

        tape.backward(terms.total)
        grads = tape.param_grads()
        for name, grad in grads.items():
            if not np.isfinite(grad).all():
                raise NumericalError(f"non-finite gradient for {name}", term=name)

        self.optimizer.step(model.parameters(), grads)
        self.last_op_counts = dict(tape.op_counts)
        return StepResult(
            loss=values["loss"],
            invariance=values["invariance"],
            constraint1=values["constraint1"],
            constraint2=values["constraint2"],
            peak_bytes=tape.meter.peak_bytes,
            constraint_bytes=tape.meter.largest("gram_rows", "gram_cols"),
            encoder_forwards=encoder_forwards,
        )

    # -- epochs ---------------------------------------------------------

    def iter_blocks(self, graph: Graph) -> Iterator[SampledBlock]:
        """Sampled blocks over one shuffled pass of all nodes"""
        batch = self.config.batch
        order = self.sample_rng.permutation(graph.num_nodes)
        for start in range(0, graph.num_nodes, batch.batch_size):
            seeds = order[start:start + batch.batch_size]
            yield neighbor_sample(graph, seeds, list(batch.fanouts), self.sample_rng)

    def fit(
        self, dataset, on_checkpoint: Optional[CheckpointCallback] = None
    ) -> Tuple[TrainedModel, TrainHistory]:
        """
        Train for the configured number of epochs

        Args:
            dataset: Bundle providing ``graph`` and ``features``
            on_checkpoint: Called with (epoch, model, record) every
                ``checkpoint_every`` epochs and after the final epoch

        Returns:
            Final parameters and one history record per epoch
        """
        cfg = self.config
        cfg.validate()
        features = np.asarray(dataset.features, dtype=cfg.dtype)
        graph: Graph = dataset.graph
        if features.shape[0] != graph.num_nodes:
            raise ShapeError("fit", [features.shape, (graph.num_nodes,)],
                             "feature rows must equal the node count")
        if self.model is None:
            self.init_model(features.shape[1])
        model = self._require_model(None)
        if features.shape[1] != model.num_features:
            raise ShapeError("fit", [features.shape, (model.num_features,)],
                             "feature width differs from the model input width")

        adjacency = normalize_adjacency(graph) if cfg.batch.kind is BatchKind.FULL else None
        history = TrainHistory()
        logger.info(f"Training {cfg.mode.value} mode, {cfg.loss.constraint_mode.value} "
                    f"constraint, {cfg.batch.kind.value} batches, {cfg.epochs} epochs")

        for epoch in range(1, cfg.epochs + 1):
            start = time.perf_counter()
            try:
                if adjacency is not None:
                    results = [self.train_step(adjacency, features, model)]
                else:
                    results = [
                        self.train_step(block, features[block.input_nodes], model)
                        for block in self.iter_blocks(graph)
                    ]
            except NumericalError as e:
                raise NumericalError(str(e), epoch=epoch, term=e.term) from e
            elapsed_ms = (time.perf_counter() - start) * 1000.0 if cfg.record_timing else 0.0

            record = EpochRecord(
                epoch=epoch,
                loss=float(np.mean([r.loss for r in results])),
                invariance=float(np.mean([r.invariance for r in results])),
                constraint1=float(np.mean([r.constraint1 for r in results])),
                constraint2=float(np.mean([r.constraint2 for r in results])),
                ms=elapsed_ms,
                peak_bytes=max(r.peak_bytes for r in results),
                constraint_bytes=max(r.constraint_bytes for r in results),
                encoder_forwards=sum(r.encoder_forwards for r in results),
                steps=len(results),
            )
            history.append(record)
            logger.debug(f"epoch {epoch}: loss={record.loss:.6f} "
                         f"invariance={record.invariance:.6f} "
                         f"constraints={record.constraint1:.6f},{record.constraint2:.6f}")
            if epoch % 50 == 0:
                logger.info(f"epoch {epoch}/{cfg.epochs}: loss={record.loss:.6f}")

            due = epoch % cfg.checkpoint_every == 0 or epoch == cfg.epochs
            if on_checkpoint is not None and due:
                on_checkpoint(epoch, model, record)

        return model, history

    # -- inference ------------------------------------------------------

    def embed(self, dataset, model: Optional[TrainedModel] = None) -> np.ndarray:
        """
        Embeddings of all nodes in eval mode (no dropout)

        Pre mode returns the encoder output for the raw features, or for
        the mean of both augmented views when the augmenter changes the
        width (see ``pre_embed_input``). Post mode returns the augmentation
        head output selected by ``post_head``. Rows are not normalized.
        """
        cfg = self.config
        model = self._require_model(model)
        features = np.asarray(dataset.features, dtype=model.augmenter.dtype)
        adjacency: NormalizedAdjacency = normalize_adjacency(dataset.graph)
        self._check_rows(adjacency, features)
        if features.shape[1] != model.num_features:
            raise ShapeError("embed", [features.shape, (model.num_features,)])

        tape = Tape()
        x = tape.leaf(features, name="x")
        if model.mode is AugmentMode.PRE:
            if self._embed_raw(model, features.shape[1]):
                z = encode(tape, adjacency, x, model.encoder, False)
            else:
                v1, v2 = augment_pair(tape, x, model.augmenter, False)
                z = encode(tape, adjacency, tape.mean_pair(v1, v2), model.encoder, False)
        else:
            h = encode(tape, adjacency, x, model.encoder, False)
            z1, z2 = augment_pair(tape, h, model.augmenter, False)
            z = {PostHead.MEAN: None, PostHead.HEAD1: z1, PostHead.HEAD2: z2}[cfg.post_head]
            if z is None:
                z = tape.mean_pair(z1, z2)
        values = np.array(z.values)
        if not np.isfinite(values).all():
            raise NumericalError("non-finite embeddings", term="embedding")
        return values

    def _embed_raw(self, model: TrainedModel, num_features: int) -> bool:
        choice = self.config.pre_embed_input
        if choice is PreEmbedInput.RAW:
            if model.encoder.in_dim != num_features:
                raise ConfigError(
                    f"pre_embed_input=raw needs aug_dim == {num_features} features, "
                    f"the encoder expects {model.encoder.in_dim}"
                )
            return True
        if choice is PreEmbedInput.AUGMENTED:
            return False
        return model.encoder.in_dim == num_features
