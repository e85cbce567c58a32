"""Spherical VAD emotion-space toolkit and a small numpy style-pooling regressor."""

from ._kernels import BACKEND
from .geometry import (
    RegionPartition,
    Scale,
    SphericalPoint,
    VadPoint,
    assign_region,
    denormalize_vad,
    make_partition,
    normalize_vad,
    region_centroid,
    to_cartesian,
    to_spherical,
)
from .model import Model, ModelConfig, Pooling, init_model

__version__ = "0.1.0"
