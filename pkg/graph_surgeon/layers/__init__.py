from .augmenter import AugmenterParams, augment_pair
from .base import ParameterSet, glorot_uniform
from .encoder import EncoderParams, Propagation, encode

__all__ = [
    "AugmenterParams",
    "EncoderParams",
    "ParameterSet",
    "Propagation",
    "augment_pair",
    "encode",
    "glorot_uniform",
]
