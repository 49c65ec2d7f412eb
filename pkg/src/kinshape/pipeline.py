"""Pair-level feature construction: per-image inputs -> comparison features.

The shape feature is ``vec(B)`` (full m x m, row-major); the appearance feature
is the element-wise product of the two appearance vectors.
"""

import numpy as np

from kinshape import appearance, grassmann
from kinshape.errors import DegenerateSpectrumError


def shape_feature(sample, *, center=True):
    return grassmann.aisc_forward(sample.shape_a, sample.shape_b, center=center).ravel()


def appearance_feature(sample, *, normalize=False):
    return appearance.ac_forward(sample.appearance_a, sample.appearance_b, normalize=normalize)


def feature_matrices(samples, *, center=True, normalize=False):
    """Stack comparison features for a list of pairs into two arrays."""
    x_shape = np.stack([shape_feature(s, center=center) for s in samples])
    x_app = np.stack([appearance_feature(s, normalize=normalize) for s in samples])
    return x_shape, x_app


def input_gradients(sample, grad_shape_feature, grad_appearance_feature, *, center=True, path="svd"):
    """Push feature gradients back onto the raw pair inputs.

    Returns ``(grad_shape_a, grad_shape_b, grad_appearance_a, grad_appearance_b)``.
    ``path`` picks the shape backward: ``"svd"``, ``"projector"``, or
    ``"auto"`` (SVD, falling back to the projector form on a degenerate
    spectrum).
    """
    m = sample.shape_a.shape[0]
    upstream = np.asarray(grad_shape_feature, dtype=np.float64).reshape(m, m)
    if path == "projector":
        gsa, gsb = grassmann.aisc_backward_projector(
            sample.shape_a, sample.shape_b, upstream, center=center
        )
    elif path in ("svd", "auto"):
        try:
            gsa, gsb = grassmann.aisc_backward_svd(
                sample.shape_a, sample.shape_b, upstream, center=center
            )
        except DegenerateSpectrumError:
            if path == "svd":
                raise
            gsa, gsb = grassmann.aisc_backward_projector(
                sample.shape_a, sample.shape_b, upstream, center=center
            )
    else:
        raise ValueError(f"unknown backward path {path!r}")
    gaa, gab = appearance.ac_backward(sample.appearance_a, sample.appearance_b, grad_appearance_feature)
    return gsa, gsb, gaa, gab
