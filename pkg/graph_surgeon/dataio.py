"""
Dataset directories, binary matrix files and the SBM generator

A dataset directory holds five files::

    edges.tsv     src<TAB>dst per undirected edge, '#' comments allowed
    features.bin  GSFX matrix (N x F)
    labels.tsv    node<TAB>label; label is a class index, or C comma
                  separated 0/1 flags for multi-label tasks
    splits.tsv    node<TAB>{train,val,test,none}
    meta.txt      key=value lines: name, task, num_nodes, num_edges,
                  num_features, num_classes

Matrix files are magic, u32 version, u64 rows, u64 cols and then
little-endian f32 values row-major. ``GSFX`` holds features and ``GSEM``
embeddings.
"""

import logging
import os
import struct
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from .exceptions import ConfigError, DatasetFormatError, GraphError
from .graph import (
    SPLIT_NAMES,
    Graph,
    SplitMask,
    build_graph,
    random_split,
    read_edge_list,
    read_text_lines,
    write_edge_list,
)
from .probe import LabelSet, TaskKind

logger = logging.getLogger(__name__)

FEATURES_MAGIC = b"GSFX"
EMBEDDINGS_MAGIC = b"GSEM"
MATRIX_VERSION = 1
_MATRIX_HEADER = struct.Struct("<4sIQQ")

DATASET_FILES = ("edges.tsv", "features.bin", "labels.tsv", "splits.tsv", "meta.txt")
META_KEYS = ("name", "task", "num_nodes", "num_edges", "num_features", "num_classes")


def atomic_write_bytes(path: Union[str, Path], data: bytes) -> None:
    """Write ``data`` to a temporary file beside ``path`` and rename it over ``path``"""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Union[str, Path], text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# -- matrix files ----------------------------------------------------------

def write_matrix(path: Union[str, Path], matrix: np.ndarray, magic: bytes) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise DatasetFormatError(f"expected a 2-D matrix, got shape {matrix.shape}", path=path)
    header = _MATRIX_HEADER.pack(magic, MATRIX_VERSION, matrix.shape[0], matrix.shape[1])
    atomic_write_bytes(path, header + np.ascontiguousarray(matrix, dtype="<f4").tobytes())


def read_matrix(path: Union[str, Path], magic: bytes) -> np.ndarray:
    """
    Read a matrix file, validating magic, version and length

    Raises:
        DatasetFormatError: On any mismatch; no partial matrix is returned
    """
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise DatasetFormatError(f"cannot read matrix file: {e.strerror}", path=path) from e
    if len(data) < _MATRIX_HEADER.size:
        raise DatasetFormatError("truncated header", path=path)
    found, version, rows, cols = _MATRIX_HEADER.unpack_from(data)
    if found != magic:
        raise DatasetFormatError(f"bad magic {found!r}, expected {magic!r}", path=path)
    if version != MATRIX_VERSION:
        raise DatasetFormatError(f"unsupported version {version}", path=path)
    expected = _MATRIX_HEADER.size + rows * cols * 4
    if len(data) != expected:
        raise DatasetFormatError(
            f"header declares {rows}x{cols} values ({expected} bytes) "
            f"but the file has {len(data)} bytes",
            path=path,
        )
    if rows * cols == 0:
        return np.zeros((rows, cols), dtype=np.float32)
    values = np.frombuffer(data, dtype="<f4", offset=_MATRIX_HEADER.size)
    return values.reshape(rows, cols).astype(np.float32)


def save_embeddings(path: Union[str, Path], matrix: np.ndarray) -> None:
    write_matrix(path, matrix, EMBEDDINGS_MAGIC)


def load_embeddings(path: Union[str, Path]) -> np.ndarray:
    return read_matrix(path, EMBEDDINGS_MAGIC)


# -- datasets --------------------------------------------------------------

@dataclass(frozen=True)
class DatasetMeta:
    name: str
    task: TaskKind
    num_nodes: int
    num_edges: int
    num_features: int
    num_classes: int

    def summary(self) -> str:
        return (f"name={self.name} N={self.num_nodes} M={self.num_edges} "
                f"F={self.num_features} C={self.num_classes} task={self.task.value}")

    def to_text(self) -> str:
        values = {key: getattr(self, key) for key in META_KEYS}
        values["task"] = self.task.value
        return "".join(f"{key}={values[key]}\n" for key in META_KEYS)


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    """A graph with node features, labels, splits and metadata"""

    graph: Graph
    features: np.ndarray
    labels: LabelSet
    splits: SplitMask
    meta: DatasetMeta

    def __post_init__(self):
        n = self.graph.num_nodes
        checks = [
            ("meta.num_nodes", self.meta.num_nodes, n),
            ("meta.num_edges", self.meta.num_edges, self.graph.num_edges),
            ("feature rows", self.features.shape[0], n),
            ("meta.num_features", self.meta.num_features, self.features.shape[1]),
            ("label rows", self.labels.num_nodes, n),
            ("meta.num_classes", self.meta.num_classes, self.labels.num_classes),
        ]
        for what, found, expected in checks:
            if found != expected:
                raise DatasetFormatError(f"{what} is {found} but the graph implies {expected}")
        if self.meta.task is not self.labels.task:
            raise DatasetFormatError(f"meta task {self.meta.task.value} differs from label task "
                                     f"{self.labels.task.value}")
        for name in SPLIT_NAMES:
            if self.splits.get(name).max() >= n:
                raise DatasetFormatError(f"split '{name}' references a node outside [0, {n})")

    def without_edges(self) -> "DatasetBundle":
        """The same nodes, features, labels and splits with every edge removed"""
        graph = build_graph(np.empty((0, 2), dtype=np.int64), self.graph.num_nodes)
        return replace(self, graph=graph, meta=replace(self.meta, num_edges=0))


def _read_meta(path: Path) -> DatasetMeta:
    values: Dict[str, str] = {}
    for number, line in enumerate(read_text_lines(path), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DatasetFormatError(f"expected key=value, got {line!r}",
                                     path=path, line=number)
        values[key.strip()] = value.strip()
    missing = [key for key in META_KEYS if key not in values]
    if missing:
        raise DatasetFormatError(f"missing keys: {', '.join(missing)}", path=path)
    try:
        task = TaskKind(values["task"])
    except ValueError:
        raise DatasetFormatError(f"unknown task {values['task']!r}", path=path) from None
    counts = {}
    for key in META_KEYS[2:]:
        try:
            counts[key] = int(values[key])
        except ValueError:
            raise DatasetFormatError(f"{key} must be an integer, got {values[key]!r}",
                                     path=path) from None
    return DatasetMeta(name=values["name"], task=task, **counts)


def _read_node_table(path: Path, num_nodes: int) -> List[Tuple[int, str, int]]:
    """(node, value, line number) rows; each node must appear exactly once"""
    rows = []
    seen = np.zeros(num_nodes, dtype=bool)
    for number, line in enumerate(read_text_lines(path), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        node_text, sep, value = line.partition("\t")
        if not sep:
            raise DatasetFormatError(f"expected 'node<TAB>value', got {line!r}",
                                     path=path, line=number)
        try:
            node = int(node_text)
        except ValueError:
            raise DatasetFormatError(f"non-integer node {node_text!r}",
                                     path=path, line=number) from None
        if not 0 <= node < num_nodes:
            raise DatasetFormatError(f"node {node} outside [0, {num_nodes})",
                                     path=path, line=number)
        if seen[node]:
            raise DatasetFormatError(f"node {node} listed twice", path=path, line=number)
        seen[node] = True
        rows.append((node, value.strip(), number))
    if not seen.all():
        raise DatasetFormatError(f"{int((~seen).sum())} nodes have no entry", path=path)
    return rows


def _read_labels(path: Path, meta: DatasetMeta) -> LabelSet:
    c = meta.num_classes
    if meta.task is TaskKind.MULTILABEL:
        labels = np.zeros((meta.num_nodes, c), dtype=np.int8)
    else:
        labels = np.zeros(meta.num_nodes, dtype=np.int64)
    for node, value, number in _read_node_table(path, meta.num_nodes):
        if meta.task is TaskKind.MULTILABEL:
            flags = value.split(",")
            if len(flags) != c or any(flag not in ("0", "1") for flag in flags):
                raise DatasetFormatError(f"expected {c} comma separated 0/1 flags, got {value!r}",
                                         path=path, line=number)
            labels[node] = [int(flag) for flag in flags]
        else:
            try:
                label = int(value)
            except ValueError:
                raise DatasetFormatError(f"non-integer label {value!r}",
                                         path=path, line=number) from None
            if not 0 <= label < c:
                raise DatasetFormatError(f"class index {label} outside [0, {c})",
                                         path=path, line=number)
            labels[node] = label
    return LabelSet(meta.task, c, labels)


def _read_splits(path: Path, num_nodes: int) -> SplitMask:
    names = ["none"] * num_nodes
    for node, value, number in _read_node_table(path, num_nodes):
        if value not in SPLIT_NAMES + ("none",):
            raise DatasetFormatError(f"unknown split {value!r}", path=path, line=number)
        names[node] = value
    try:
        return SplitMask.from_assignments(names)
    except GraphError as e:
        raise DatasetFormatError(str(e), path=path) from e


def load_dataset(directory: Union[str, Path]) -> DatasetBundle:
    """
    Load and validate a dataset directory

    Raises:
        DatasetFormatError: Missing files, malformed lines, or dimension
            mismatches between files (messages name the file and line)
    """
    directory = Path(directory)
    for name in DATASET_FILES:
        if not (directory / name).is_file():
            raise DatasetFormatError("missing dataset file", path=directory / name)

    try:
        meta = _read_meta(directory / "meta.txt")
        edges = read_edge_list(directory / "edges.tsv")
        try:
            graph = build_graph(edges, meta.num_nodes)
        except GraphError as e:
            raise DatasetFormatError(f"{e} (meta.txt declares {meta.num_nodes} nodes)",
                                     path=directory / "edges.tsv") from e

        features = read_matrix(directory / "features.bin", FEATURES_MAGIC)
        if features.shape[0] != meta.num_nodes:
            raise DatasetFormatError(
                f"features.bin declares N={features.shape[0]} but meta.txt and edges.tsv "
                f"describe {meta.num_nodes} nodes", path=directory / "features.bin",
            )
        if features.shape[1] != meta.num_features:
            raise DatasetFormatError(
                f"features.bin declares F={features.shape[1]} but meta.txt declares "
                f"{meta.num_features}", path=directory / "features.bin",
            )
        if not np.isfinite(features).all():
            bad = np.argwhere(~np.isfinite(features))[0]
            raise DatasetFormatError(f"non-finite feature at row {bad[0]}, column {bad[1]}",
                                     path=directory / "features.bin")
        if graph.num_edges != meta.num_edges:
            raise DatasetFormatError(
                f"edges.tsv holds {graph.num_edges} distinct edges but meta.txt declares "
                f"{meta.num_edges}", path=directory / "edges.tsv",
            )

        labels = _read_labels(directory / "labels.tsv", meta)
        splits = _read_splits(directory / "splits.tsv", meta.num_nodes)
    except OSError as e:
        raise DatasetFormatError(f"cannot read dataset: {e}", path=directory) from e

    features.setflags(write=False)
    bundle = DatasetBundle(graph, features, labels, splits, meta)
    logger.info(f"Loaded dataset {directory}: {meta.summary()}")
    return bundle


def write_dataset(bundle: DatasetBundle, directory: Union[str, Path]) -> None:
    """Write ``bundle`` in the five-file layout, creating ``directory`` if needed"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n = bundle.graph.num_nodes

    write_edge_list(directory / "edges.tsv", bundle.graph)
    write_matrix(directory / "features.bin", bundle.features, FEATURES_MAGIC)

    if bundle.labels.task is TaskKind.MULTILABEL:
        label_text = [",".join(str(int(v)) for v in row) for row in bundle.labels.labels]
    else:
        label_text = [str(int(v)) for v in bundle.labels.labels]
    atomic_write_text(directory / "labels.tsv",
                      "".join(f"{i}\t{label_text[i]}\n" for i in range(n)))

    assignments = bundle.splits.assignments(n)
    atomic_write_text(directory / "splits.tsv",
                      "".join(f"{i}\t{assignments[i]}\n" for i in range(n)))
    atomic_write_text(directory / "meta.txt", bundle.meta.to_text())
    logger.info(f"Wrote dataset to {directory}")


# -- synthetic graphs ------------------------------------------------------

@dataclass
class SbmConfig:
    """
    Stochastic block model with Gaussian class-mean features

    Attributes:
        blocks: Number of communities (= classes)
        nodes_per_block: Community size
        p_in: Edge probability inside a community
        p_out: Edge probability across communities
        feature_dim: Feature width F
        signal_strength: Norm of each class-mean vector (noise is unit Gaussian)
        seed: Generator seed
        name: Dataset name written to meta.txt
    """

    blocks: int = 4
    nodes_per_block: int = 250
    p_in: float = 0.05
    p_out: float = 0.005
    feature_dim: int = 64
    signal_strength: float = 2.0
    seed: int = 0
    name: str = "sbm"

    def validate(self) -> None:
        if self.blocks < 1 or self.nodes_per_block < 1:
            raise ConfigError("blocks and nodes_per_block must be >= 1")
        if self.feature_dim < 1:
            raise ConfigError(f"feature_dim must be >= 1, got {self.feature_dim}")
        for name in ("p_in", "p_out"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        if self.blocks > 1 and self.p_in <= self.p_out:
            raise ConfigError(f"p_in ({self.p_in}) must exceed p_out ({self.p_out})")
        if self.signal_strength < 0:
            raise ConfigError(f"signal_strength must be >= 0, got {self.signal_strength}")

    @property
    def num_nodes(self) -> int:
        return self.blocks * self.nodes_per_block

    def expected_degree(self) -> float:
        k = self.nodes_per_block
        return self.p_in * (k - 1) + self.p_out * (self.num_nodes - k)

    def expected_edges(self) -> float:
        k, b = self.nodes_per_block, self.blocks
        return self.p_in * b * k * (k - 1) / 2 + self.p_out * k * k * b * (b - 1) / 2


def _fallback_split(n: int, rng: np.random.Generator) -> SplitMask:
    if n < 3:
        raise GraphError(f"{n} nodes cannot form non-empty train/val/test splits")
    order = rng.permutation(n).astype(np.int64)
    return SplitMask(train=order[:1], val=order[1:2], test=np.sort(order[2:]))


def generate_sbm(config: SbmConfig) -> DatasetBundle:
    """
    Sample an SBM graph with homophilous features

    Each unordered node pair is sampled once with probability p_in or
    p_out. Features are the node's block-mean vector plus unit Gaussian
    noise; labels are block ids; splits are 5/15/80 percent.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    k, b = config.nodes_per_block, config.blocks
    n = config.num_nodes
    if config.expected_degree() < 1:
        logger.warning(f"Expected degree {config.expected_degree():.3f} < 1; "
                       "the graph may fragment")

    edges = []
    for a in range(b):
        for c in range(a, b):
            draws = rng.random((k, k)) < (config.p_in if a == c else config.p_out)
            if a == c:
                draws = np.triu(draws, k=1)
            rows, cols = np.nonzero(draws)
            edges.append(np.column_stack([rows + a * k, cols + c * k]))
    graph = build_graph(np.concatenate(edges).astype(np.int64), n)

    labels = np.repeat(np.arange(b, dtype=np.int64), k)
    means = rng.standard_normal((b, config.feature_dim))
    means *= config.signal_strength / np.linalg.norm(means, axis=1, keepdims=True)
    features = (means[labels] + rng.standard_normal((n, config.feature_dim))).astype(np.float32)
    features.setflags(write=False)

    try:
        splits = random_split(n, rng)
    except GraphError:
        logger.warning(f"{n} nodes are too few for 5/15/80 splits; using 1 train, 1 val, rest test")
        splits = _fallback_split(n, rng)

    task = TaskKind.BINARY if b == 2 else TaskKind.MULTICLASS
    meta = DatasetMeta(config.name, task, n, graph.num_edges, config.feature_dim, b)
    return DatasetBundle(graph, features, LabelSet(task, b, labels), splits, meta)
