"""
GraphSurgeon

Self-supervised graph representation learning with learnable
augmentations, a shared GCN encoder and a Laplacian-Eigenmaps loss,
built on a small reverse-mode autodiff tape.
"""

__version__ = '0.1.0'

# Import main components
from .dataio import DatasetBundle, SbmConfig, generate_sbm, load_dataset, write_dataset
from .exceptions import (
    ConfigError,
    DatasetFormatError,
    GradCheckFailure,
    GraphError,
    ModeMismatchError,
    NumericalError,
    ShapeError,
    SurgeonError,
    SurgeonInputError,
    SurgeonUsageError,
)
from .graph import Graph, build_graph, neighbor_sample, normalize_adjacency
from .objective import ConstraintMode, LossConfig
from .probe import LabelSet, TaskKind, evaluate, fit_probe
from .tape import Tape
from .trainer import AugmentMode, GraphSurgeon, TrainConfig, TrainedModel

__all__ = [
    'AugmentMode',
    'ConfigError',
    'ConstraintMode',
    'DatasetBundle',
    'DatasetFormatError',
    'GradCheckFailure',
    'Graph',
    'GraphError',
    'GraphSurgeon',
    'LabelSet',
    'LossConfig',
    'ModeMismatchError',
    'NumericalError',
    'SbmConfig',
    'ShapeError',
    'SurgeonError',
    'SurgeonInputError',
    'SurgeonUsageError',
    'Tape',
    'TaskKind',
    'TrainConfig',
    'TrainedModel',
    'build_graph',
    'evaluate',
    'fit_probe',
    'generate_sbm',
    'load_dataset',
    'neighbor_sample',
    'normalize_adjacency',
    'write_dataset',
]
