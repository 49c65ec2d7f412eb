"""Dense linear-algebra kernels used throughout kinshape.

Matrices are plain float64 ``numpy.ndarray`` objects. The two hot loops
(Jacobi rotations for the thin SVD, and the per-entry SVD Jacobian contraction
used by the shape backward pass) come from a compiled Cython extension when it
is importable and from ``_pykernels`` otherwise. Set ``KINSHAPE_PURE_PYTHON=1``
to force the fallback.
"""

import os
from typing import NamedTuple

import numpy as np

from kinshape.errors import InvalidInputError, ShapeMismatchError
from kinshape.kernels import _pykernels

BACKENDS = {"python": _pykernels}

try:
    from kinshape.kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None
else:
    BACKENDS["cython"] = _ckernels

if _ckernels is not None and os.environ.get("KINSHAPE_PURE_PYTHON", "") in ("", "0"):
    BACKEND = "cython"
else:
    BACKEND = "python"

JACOBI_TOL = 1e-15
ZERO_TOL = 1e-15


def get_backend(name=None):
    name = BACKEND if name is None else name
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}") from None


class ThinSvd(NamedTuple):
    """``a = u @ diag(d) @ v.T`` with ``u`` m x k orthonormal, ``d`` descending."""

    u: np.ndarray
    d: np.ndarray
    v: np.ndarray

    def reconstruct(self):
        return (self.u * self.d) @ self.v.T


def as_matrix(a, name="matrix"):
    """Validate and convert to a finite 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatchError(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def _fix_signs(u, v):
    # largest-magnitude entry of each u column made positive; mirrored into v
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, v * signs


def _complete_basis(u, filled):
    """Fill columns of ``u`` not in ``filled`` with unit vectors orthogonal to the rest."""
    m, k = u.shape
    basis = [u[:, j] for j in range(k) if filled[j]]
    out = u.copy()
    for j in range(k):
        if filled[j]:
            continue
        best = None
        for e in range(m):
            cand = np.zeros(m)
            cand[e] = 1.0
            for b in basis:
                cand -= (b @ cand) * b
            nrm = np.linalg.norm(cand)
            if best is None or nrm > best[0]:
                best = (nrm, cand)
        col = best[1] / best[0]
        out[:, j] = col
        basis.append(col)
    return out


def thin_svd(a, *, backend=None):
    """Thin SVD of an m x k matrix (m >= k) by one-sided Jacobi rotations.

    Singular values come back sorted descending. Sign convention: the
    largest-magnitude entry of every ``u`` column is positive.

    Rank-deficient input is allowed; zero singular values get an arbitrary
    orthonormal completion in ``u`` so ``u.T @ u == I`` always holds.
    """
    a = as_matrix(a, "a")
    m, k = a.shape
    if m < k:
        raise ShapeMismatchError(f"thin_svd needs rows >= cols, got {a.shape}")
    u, d, v = get_backend(backend).jacobi_svd(a, JACOBI_TOL, ZERO_TOL * max(m, k))
    nonzero = d > 0.0
    if not np.all(nonzero):
        u = _complete_basis(u, nonzero)
        u, v = _fix_signs(u, v)
    return ThinSvd(u, d, v)


def sym_eigen(a, *, rtol=1e-8):
    """Eigen-decomposition of a symmetric matrix, eigenvalues descending.

    Returns ``(eigenvalues, eigenvectors)`` with ``a @ q == q @ diag(lam)``.
    """
    a = as_matrix(a, "a")
    if a.shape[0] != a.shape[1]:
        raise ShapeMismatchError(f"sym_eigen needs a square matrix, got {a.shape}")
    asym = np.linalg.norm(a - a.T)
    if asym > rtol * np.linalg.norm(a):
        raise InvalidInputError(f"matrix is not symmetric (||a - a^T||_F = {asym:.3e})")
    lam, q = np.linalg.eigh(0.5 * (a + a.T))
    lam = lam[::-1].copy()
    q = q[:, ::-1]
    q, _ = _fix_signs(q, np.zeros((1, q.shape[1])))
    return lam, q


def _check_same(a, b, op):
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def transpose(a):
    return as_matrix(a).T.copy()


def frobenius_norm(a):
    return float(np.sqrt(np.sum(np.square(np.asarray(a, dtype=np.float64)))))


def hadamard(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same(a, b, "hadamard")
    return a * b


def add(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same(a, b, "add")
    return a + b


def subtract(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same(a, b, "subtract")
    return a - b


def svd_grad_contract(u, d, v, w, r, *, backend=None):
    return get_backend(backend).svd_grad_contract(
        np.ascontiguousarray(u), np.ascontiguousarray(d), np.ascontiguousarray(v),
        np.ascontiguousarray(w), np.ascontiguousarray(r),
    )


__all__ = [
    "BACKEND",
    "BACKENDS",
    "ThinSvd",
    "add",
    "as_matrix",
    "frobenius_norm",
    "get_backend",
    "hadamard",
    "matmul",
    "subtract",
    "svd_grad_contract",
    "sym_eigen",
    "thin_svd",
    "transpose",
]
