"""Appearance comparison: element-wise product of two feature vectors."""

import numpy as np

from kinshape.errors import InvalidInputError, ShapeMismatchError


def as_vector(values, name="appearance"):
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ShapeMismatchError(f"{name} must be a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return v


def _pair(a, b):
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.shape != b.shape:
        raise ShapeMismatchError(f"appearance dims differ: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def l2_normalize(v, eps=1e-12):
    return v / max(float(np.linalg.norm(v)), eps)


def ac_forward(a, b, *, normalize=False):
    """``a * b`` element-wise. ``normalize`` L2-normalises both inputs first."""
    a, b = _pair(a, b)
    if normalize:
        a, b = l2_normalize(a), l2_normalize(b)
    return a * b


def ac_backward(a, b, upstream):
    """Product-rule gradients ``(upstream * b, upstream * a)``.

    Applies to the un-normalised forward only.
    """
    a, b = _pair(a, b)
    g = as_vector(upstream, "upstream")
    if g.shape != a.shape:
        raise ShapeMismatchError(f"upstream dim {g.shape[0]} does not match {a.shape[0]}")
    return g * b, g * a
