"""Affine-invariant Grassmann shape comparison with analytic SVD backprop,
plus the appearance/shape kinship-verification pipeline built on it."""

from kinshape.appearance import ac_backward, ac_forward
from kinshape.grassmann import (
    GeodesicInfo,
    GrassmannDecomposition,
    aisc_backward_projector,
    aisc_backward_svd,
    aisc_forward,
    geodesic_info,
    shape_to_projector,
)
from kinshape.kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "GeodesicInfo",
    "GrassmannDecomposition",
    "KERNEL_BACKEND",
    "ac_backward",
    "ac_forward",
    "aisc_backward_projector",
    "aisc_backward_svd",
    "aisc_forward",
    "geodesic_info",
    "shape_to_projector",
]
