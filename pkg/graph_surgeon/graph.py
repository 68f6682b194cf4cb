"""
Graph storage and message-passing primitives

Immutable CSR graphs, the symmetrically normalized self-looped adjacency
used by GCN propagation, sparse-dense products, layer-wise neighbor
sampling and random node splits.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .exceptions import DatasetFormatError, GraphError, ShapeError

logger = logging.getLogger(__name__)

# Default train/validation/test proportions
SPLIT_RATIOS = (0.05, 0.15, 0.80)

SPLIT_NAMES = ("train", "val", "test")


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class _CsrOperator:
    """Shared CSR accessors for the weighted operators"""

    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _cache: Dict

    @property
    def shape(self) -> Tuple[int, int]:
        raise NotImplementedError

    @property
    def nnz(self) -> int:
        return int(self.col_indices.size)

    def as_matrix(self, dtype=np.float64) -> sp.csr_matrix:
        """
        Get the operator as a scipy CSR matrix

        Args:
            dtype: Value type of the returned matrix

        Returns:
            Cached CSR matrix with values cast to ``dtype``
        """
        key = np.dtype(dtype).str
        if key not in self._cache:
            self._cache[key] = sp.csr_matrix(
                (self.values.astype(dtype), self.col_indices, self.row_offsets),
                shape=self.shape,
            )
        return self._cache[key]

    def to_dense(self) -> np.ndarray:
        return self.as_matrix().toarray()


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph in CSR form (each edge stored in both directions)"""

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray

    @property
    def num_edges(self) -> int:
        return int(self.col_indices.size // 2)

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def max_degree(self) -> int:
        if self.num_nodes == 0:
            return 0
        return int(self.degrees().max())

    def neighbors(self, node: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[node]:self.row_offsets[node + 1]]

    def edge_pairs(self) -> np.ndarray:
        """Return each undirected edge once as ``(u, v)`` with ``u < v``"""
        rows = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees())
        upper = rows < self.col_indices
        return np.stack([rows[upper], self.col_indices[upper]], axis=1)

    def to_scipy(self) -> sp.csr_matrix:
        ones = np.ones(self.col_indices.size, dtype=np.float64)
        return sp.csr_matrix(
            (ones, self.col_indices, self.row_offsets),
            shape=(self.num_nodes, self.num_nodes),
        )


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency(_CsrOperator):
    """D^-1/2 (A + I) D^-1/2 with d_u = deg(u) + 1"""

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    degrees: np.ndarray
    _cache: Dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.num_nodes, self.num_nodes)


@dataclass(frozen=True, eq=False)
class BlockLayer(_CsrOperator):
    """
    One bipartite message-passing block of a sampled computation graph

    Sources list the targets first (in order), followed by the sampled
    neighbors in order of first appearance. Column indices are local
    positions into ``source_nodes``.
    """

    target_nodes: np.ndarray
    source_nodes: np.ndarray
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _cache: Dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def shape(self) -> Tuple[int, int]:
        return (int(self.target_nodes.size), int(self.source_nodes.size))

    def selector(self, dtype=np.float64) -> sp.csr_matrix:
        """Constant matrix picking the target rows out of a source-row matrix"""
        key = ("selector", np.dtype(dtype).str)
        if key not in self._cache:
            n_targets = self.target_nodes.size
            self._cache[key] = sp.csr_matrix(
                (
                    np.ones(n_targets, dtype=dtype),
                    np.arange(n_targets, dtype=np.int64),
                    np.arange(n_targets + 1, dtype=np.int64),
                ),
                shape=self.shape,
            )
        return self._cache[key]


@dataclass(frozen=True, eq=False)
class SampledBlock:
    """
    Layer-wise sampled computation graph for a batch of seed nodes

    ``layers`` are in compute order: ``layers[0]`` is consumed by the first
    encoder layer and ``layers[-1].target_nodes`` equals ``seed_nodes``.
    """

    seed_nodes: np.ndarray
    layers: Tuple[BlockLayer, ...]

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def input_nodes(self) -> np.ndarray:
        return self.layers[0].source_nodes


@dataclass(frozen=True, eq=False)
class SplitMask:
    """Disjoint train/validation/test node index sets"""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        sets = [np.asarray(getattr(self, name), dtype=np.int64).ravel() for name in SPLIT_NAMES]
        for name, values in zip(SPLIT_NAMES, sets):
            object.__setattr__(self, name, values)
            if values.size == 0:
                raise GraphError(f"split '{name}' is empty")
            if np.unique(values).size != values.size:
                raise GraphError(f"split '{name}' contains repeated nodes")
        merged = np.concatenate(sets)
        if np.unique(merged).size != merged.size:
            raise GraphError("train/val/test splits overlap")

    def get(self, name: str) -> np.ndarray:
        if name not in SPLIT_NAMES:
            raise GraphError(f"unknown split '{name}'")
        return getattr(self, name)

    def sizes(self) -> Tuple[int, int, int]:
        return (int(self.train.size), int(self.val.size), int(self.test.size))

    def assignments(self, num_nodes: int) -> List[str]:
        """Per-node split names, ``none`` for unassigned nodes"""
        names = ["none"] * num_nodes
        for name in SPLIT_NAMES:
            for node in self.get(name):
                names[int(node)] = name
        return names

    @classmethod
    def from_assignments(cls, names: Sequence[str]) -> "SplitMask":
        groups = {name: [] for name in SPLIT_NAMES}
        for node, name in enumerate(names):
            if name in groups:
                groups[name].append(node)
        return cls(**{name: np.asarray(nodes, dtype=np.int64) for name, nodes in groups.items()})


def build_graph(edge_list: Union[np.ndarray, Iterable[Tuple[int, int]]], num_nodes: int) -> Graph:
    """
    Build an undirected simple graph from an edge list

    Edges are symmetrized, duplicates removed and self-loops dropped.

    Args:
        edge_list: Pairs of node indices
        num_nodes: Number of nodes N

    Returns:
        CSR graph with sorted column indices per row

    Raises:
        GraphError: If an index is outside ``[0, num_nodes)``
    """
    if num_nodes < 0:
        raise GraphError(f"num_nodes must be non-negative, got {num_nodes}")
    edges = np.asarray(list(edge_list) if not isinstance(edge_list, np.ndarray) else edge_list,
                       dtype=np.int64)
    if edges.size == 0:
        edges = edges.reshape(0, 2)
    if edges.ndim != 2 or edges.shape[1] != 2:
        raise GraphError(f"edge list must be a sequence of pairs, got shape {edges.shape}")

    bad = np.flatnonzero(((edges < 0) | (edges >= num_nodes)).any(axis=1))
    if bad.size:
        u, v = (int(x) for x in edges[bad[0]])
        raise GraphError(
            f"edge ({u}, {v}) is out of range for a graph with {num_nodes} nodes",
            pair=(u, v),
        )

    loops = edges[:, 0] == edges[:, 1]
    edges = edges[~loops]
    both = np.concatenate([edges, edges[:, ::-1]])
    codes = np.unique(both[:, 0] * num_nodes + both[:, 1])
    rows = codes // max(num_nodes, 1)
    cols = codes % max(num_nodes, 1)

    dropped_loops = int(loops.sum())
    duplicates = int(both.shape[0] - codes.size) // 2
    if dropped_loops or duplicates:
        logger.info(
            f"Cleaned edge list: dropped {dropped_loops} self-loops "
            f"and {duplicates} duplicate edges"
        )

    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=num_nodes), out=offsets[1:])
    return Graph(
        num_nodes=int(num_nodes),
        row_offsets=_frozen(offsets),
        col_indices=_frozen(cols.astype(np.int64)),
    )


def normalize_adjacency(g: Graph) -> NormalizedAdjacency:
    """
    Symmetrically normalize the self-looped adjacency of a graph

    Entry (u, v) is 1 / sqrt(d_u * d_v) with d_u = deg(u) + 1, so every
    row carries a diagonal entry 1 / d_u and isolated nodes map to 1.

    Args:
        g: Input graph

    Returns:
        Normalized adjacency sharing the graph's node order
    """
    n = g.num_nodes
    degrees = g.degrees().astype(np.float64) + 1.0
    nodes = np.arange(n, dtype=np.int64)
    rows = np.concatenate([np.repeat(nodes, g.degrees()), nodes])
    cols = np.concatenate([g.col_indices, nodes])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    values = 1.0 / np.sqrt(degrees[rows] * degrees[cols])
    return NormalizedAdjacency(
        num_nodes=n,
        row_offsets=_frozen(g.row_offsets + np.arange(n + 1, dtype=np.int64)),
        col_indices=_frozen(cols),
        values=_frozen(values),
        degrees=_frozen(degrees),
    )


def spmm(adj: Union[NormalizedAdjacency, BlockLayer], dense: np.ndarray) -> np.ndarray:
    """
    Sparse-dense product of a weighted operator and a dense matrix

    Args:
        adj: Normalized adjacency or a sampled block layer
        dense: Matrix with ``adj.shape[1]`` rows

    Returns:
        Dense product with the dtype of ``dense``

    Raises:
        ShapeError: If the inner dimensions differ
    """
    dense = np.asarray(dense)
    if not np.issubdtype(dense.dtype, np.floating):
        dense = dense.astype(np.float64)
    if dense.ndim != 2 or dense.shape[0] != adj.shape[1]:
        raise ShapeError("spmm", [adj.shape, dense.shape])
    return np.asarray(adj.as_matrix(dense.dtype) @ dense)


def _resolve_fanout(fanout) -> Optional[int]:
    if fanout is None:
        return None
    if isinstance(fanout, float) and math.isinf(fanout):
        return None
    fanout = int(fanout)
    if fanout == -1:
        return None
    if fanout < 0:
        raise GraphError(f"fanout must be non-negative or -1 (all), got {fanout}")
    return fanout


def _sample_layer(
    g: Graph,
    targets: np.ndarray,
    fanout: Optional[int],
    degrees: np.ndarray,
    rng: np.random.Generator,
) -> BlockLayer:
    local: Dict[int, int] = {int(u): i for i, u in enumerate(targets)}
    sources: List[int] = [int(u) for u in targets]
    offsets = [0]
    cols: List[int] = []
    values: List[float] = []

    for i, u in enumerate(targets):
        u = int(u)
        neighbors = g.neighbors(u)
        if fanout is not None and fanout < neighbors.size:
            neighbors = np.sort(rng.choice(neighbors, size=fanout, replace=False))
        row = [(i, 1.0 / degrees[u])]
        for v in neighbors:
            v = int(v)
            j = local.get(v)
            if j is None:
                j = len(sources)
                local[v] = j
                sources.append(v)
            row.append((j, 1.0 / math.sqrt(degrees[u] * degrees[v])))
        row.sort()
        cols.extend(j for j, _ in row)
        values.extend(w for _, w in row)
        offsets.append(len(cols))

    return BlockLayer(
        target_nodes=_frozen(np.asarray(targets, dtype=np.int64).copy()),
        source_nodes=_frozen(np.asarray(sources, dtype=np.int64)),
        row_offsets=_frozen(np.asarray(offsets, dtype=np.int64)),
        col_indices=_frozen(np.asarray(cols, dtype=np.int64)),
        values=_frozen(np.asarray(values, dtype=np.float64)),
    )


def neighbor_sample(
    g: Graph,
    seeds: Sequence[int],
    fanouts: Sequence[Optional[int]],
    rng: np.random.Generator,
) -> SampledBlock:
    """
    Sample a layer-wise computation graph around a batch of seed nodes

    Each target keeps ``min(fanout, degree)`` neighbors drawn without
    replacement plus its self-loop. Edge weights reuse the full-graph
    normalization 1 / sqrt(d_u * d_v).

    Args:
        g: Graph to sample from
        seeds: Distinct seed node indices
        fanouts: One fanout per encoder layer, first layer first;
            ``None`` or ``-1`` keeps every neighbor
        rng: Generator owned by the caller

    Returns:
        Sampled block with one layer per fanout
    """
    seeds = np.asarray(seeds, dtype=np.int64).ravel()
    if seeds.size == 0:
        raise GraphError("neighbor_sample: empty seed list")
    if ((seeds < 0) | (seeds >= g.num_nodes)).any():
        raise GraphError(f"neighbor_sample: seed out of range for {g.num_nodes} nodes")
    if np.unique(seeds).size != seeds.size:
        raise GraphError("neighbor_sample: seed list contains duplicates")
    if len(fanouts) == 0:
        raise GraphError("neighbor_sample: at least one fanout is required")

    resolved = [_resolve_fanout(f) for f in fanouts]
    degrees = g.degrees().astype(np.float64) + 1.0
    layers = []
    targets = seeds
    for fanout in reversed(resolved):
        layer = _sample_layer(g, targets, fanout, degrees, rng)
        layers.append(layer)
        targets = layer.source_nodes
    layers.reverse()
    return SampledBlock(seed_nodes=_frozen(seeds.copy()), layers=tuple(layers))


def random_split(
    n: int,
    rng: np.random.Generator,
    ratios: Sequence[float] = SPLIT_RATIOS,
) -> SplitMask:
    """
    Randomly split ``n`` nodes into train/validation/test sets

    Train and validation sizes are ``floor(n * ratio)``; the remainder goes
    to test.

    Raises:
        GraphError: If ratios do not sum to 1 or a split would be empty
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0,
                                                                          abs_tol=1e-9):
        raise GraphError(f"split ratios must be three non-negative values summing to 1, "
                         f"got {tuple(ratios)}")
    n_train = int(math.floor(n * ratios[0] + 1e-9))
    n_val = int(math.floor(n * ratios[1] + 1e-9))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise GraphError(
            f"{n} nodes are too few for split ratios {tuple(ratios)} "
            f"(sizes would be {n_train}/{n_val}/{n_test})"
        )
    order = rng.permutation(n).astype(np.int64)
    return SplitMask(
        train=np.sort(order[:n_train]),
        val=np.sort(order[n_train:n_train + n_val]),
        test=np.sort(order[n_train + n_val:]),
    )


def read_text_lines(path: Union[str, Path], error=DatasetFormatError) -> List[str]:
    """
    Lines of a UTF-8 text file

    Raises:
        OSError: If the file cannot be read
        SurgeonInputError: ``error`` naming the line of the first byte
            that is not valid UTF-8
    """
    data = Path(path).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        line = data.count(b"\n", 0, e.start) + 1
        raise error(f"invalid UTF-8 byte 0x{data[e.start]:02x}", path=path, line=line) from None
    return text.splitlines()


def read_edge_list(path: Union[str, Path]) -> np.ndarray:
    """
    Read a ``src<TAB>dst`` edge-list file

    Lines starting with ``#`` and blank lines are ignored.

    Returns:
        Integer array of shape (M, 2) as written in the file
    """
    path = Path(path)
    pairs = []
    try:
        lines = read_text_lines(path)
    except OSError as e:
        raise DatasetFormatError(f"cannot read edge list: {e}", path=path) from e
    for number, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DatasetFormatError(f"expected 'src<TAB>dst', got {line!r}",
                                     path=path, line=number)
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise DatasetFormatError(f"non-integer node index in {line!r}",
                                     path=path, line=number) from None
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def write_edge_list(path: Union[str, Path], g: Graph) -> None:
    """Write each undirected edge of ``g`` once as ``u<TAB>v`` with ``u < v``"""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# nodes={g.num_nodes} edges={g.num_edges}\n")
        for u, v in g.edge_pairs():
            f.write(f"{u}\t{v}\n")
