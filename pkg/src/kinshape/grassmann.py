"""Affine-invariant shape comparison (AISC) on the Grassmann manifold G(m, 2).

A landmark shape ``S`` (m x 2) is represented by the projector ``P = U U^T``
onto its column space, which is unchanged by ``S -> S @ A`` for any full-rank
2 x 2 ``A``. Two shapes are compared by ``B = P0 - P1``.

Two independent backward passes are provided:

* :func:`aisc_backward_svd` differentiates through the thin SVD, solving the
  2 x 2 linear system that couples ``U^T dU`` and ``dV^T V`` for every entry
  of ``S``. It refuses when the singular values are (nearly) repeated.
* :func:`aisc_backward_projector` uses the closed form
  ``P = S (S^T S)^{-1} S^T`` and never touches the SVD.
"""

from dataclasses import dataclass, field

import numpy as np

from kinshape import kernels
from kinshape.errors import (
    DegenerateShapeError,
    DegenerateSpectrumError,
    ShapeMismatchError,
)

RANK_TOL = 1e-8
SPECTRAL_GAP_TOL = 1e-8


def check_shape(points, name="shape"):
    """Return ``points`` as a finite (m, 2) float64 array with m >= 3."""
    s = kernels.as_matrix(points, name)
    if s.shape[1] != 2:
        raise ShapeMismatchError(f"{name} must have 2 columns (x, y), got {s.shape[1]}")
    if s.shape[0] < 3:
        raise DegenerateShapeError(f"{name} needs at least 3 landmarks, got {s.shape[0]}")
    return s


def center_shape(points):
    return points - points.mean(axis=0, keepdims=True)


@dataclass(frozen=True)
class GrassmannDecomposition:
    """Thin SVD of a (possibly centred) shape and the projector onto its span."""

    points: np.ndarray
    svd: kernels.ThinSvd
    projector: np.ndarray
    centered: bool = True

    @property
    def basis(self):
        return self.svd.u

    @property
    def landmark_count(self):
        return self.points.shape[0]


def shape_to_projector(s, *, center=True, backend=None):
    """Map a landmark shape to its point on G(m, 2).

    With ``center`` (the default) the landmark centroid is removed first, so
    translations are absorbed together with the linear 2 x 2 maps.

    Raises :class:`DegenerateShapeError` for collinear landmarks
    (``d2 / d1 <= 1e-8``).
    """
    s = check_shape(s)
    pts = center_shape(s) if center else s
    svd = kernels.thin_svd(pts, backend=backend)
    d = svd.d
    if d[0] == 0.0 or d[-1] / d[0] <= RANK_TOL:
        raise DegenerateShapeError(
            f"landmarks are collinear or coincident (singular values {d[0]:.3e}, {d[-1]:.3e})"
        )
    p = svd.u @ svd.u.T
    p = 0.5 * (p + p.T)
    return GrassmannDecomposition(points=pts, svd=svd, projector=p, centered=center)


def _decompose_pair(s0, s1, decomp0, decomp1, center, backend=None):
    if decomp0 is None:
        decomp0 = shape_to_projector(s0, center=center, backend=backend)
    if decomp1 is None:
        decomp1 = shape_to_projector(s1, center=center, backend=backend)
    if decomp0.landmark_count != decomp1.landmark_count:
        raise ShapeMismatchError(
            f"landmark counts differ: {decomp0.landmark_count} vs {decomp1.landmark_count}"
        )
    return decomp0, decomp1


def aisc_forward(s0, s1, *, center=True, decomp0=None, decomp1=None):
    """Shape comparison feature ``B = P0 - P1`` (symmetric, m x m, trace 0)."""
    decomp0, decomp1 = _decompose_pair(s0, s1, decomp0, decomp1, center)
    return decomp0.projector - decomp1.projector


def _check_upstream(upstream, m):
    g = kernels.as_matrix(upstream, "upstream")
    if g.shape != (m, m):
        raise ShapeMismatchError(f"upstream gradient must be {m}x{m}, got {g.shape}")
    return g


def _uncenter_grad(grad, centered):
    # centring is linear and self-adjoint: C = I - 11^T/m
    if centered:
        return grad - grad.mean(axis=0, keepdims=True)
    return grad


def check_spectral_gap(svd, tol=SPECTRAL_GAP_TOL):
    d2 = svd.d ** 2
    gaps = d2[:-1] - d2[1:]
    if np.any(np.abs(gaps) <= tol * d2[0]):
        raise DegenerateSpectrumError(
            f"singular values too close for the SVD backward pass: {svd.d}; "
            "use aisc_backward_projector instead"
        )


def projector_grad_svd(decomp, grad_p, *, backend=None):
    """Gradient of ``<grad_p, P>`` with respect to the decomposed (centred) points.

    Routes through ``dL/dU = (G + G^T) U`` and the SVD Jacobian of U.
    """
    svd = decomp.svd
    check_spectral_gap(svd)
    u, d, v = svd
    grad_u = (grad_p + grad_p.T) @ u
    w = u.T @ grad_u
    r = grad_u - u @ w
    return kernels.svd_grad_contract(u, d, v, w, r, backend=backend)


def aisc_backward_svd(s0, s1, upstream, decomp0=None, decomp1=None, *, center=True, backend=None):
    """Gradients ``(dL/dS0, dL/dS1)`` of a loss through ``B = P0 - P1``.

    ``upstream`` is dL/dB. The S1 branch reuses the S0 code path with the
    upstream negated. Raises :class:`DegenerateSpectrumError` if either shape
    has ``|d1^2 - d2^2| <= 1e-8 d1^2``.
    """
    decomp0, decomp1 = _decompose_pair(s0, s1, decomp0, decomp1, center, backend)
    g = _check_upstream(upstream, decomp0.landmark_count)
    grad0 = projector_grad_svd(decomp0, g, backend=backend)
    grad1 = projector_grad_svd(decomp1, -g, backend=backend)
    return _uncenter_grad(grad0, decomp0.centered), _uncenter_grad(grad1, decomp1.centered)


def projector_grad_closed_form(points, grad_p):
    """Gradient of ``<grad_p, P(S)>`` via ``P = S (S^T S)^{-1} S^T``.

    ``dP = (I - P) dS S^+ + (S^+)^T dS^T (I - P)``, hence
    ``dL/dS = (I - P)(G + G^T) (S^+)^T``.
    """
    gram = points.T @ points
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1.0 / RANK_TOL ** 2:
        raise DegenerateShapeError("landmarks are collinear or coincident")
    pinv_t = np.linalg.solve(gram, points.T).T  # S (S^T S)^{-1}
    p = points @ pinv_t.T
    g_sym = grad_p + grad_p.T
    tmp = g_sym @ pinv_t
    return tmp - p @ tmp


def aisc_backward_projector(s0, s1, upstream, decomp0=None, decomp1=None, *, center=True):
    """Same contract as :func:`aisc_backward_svd`, but SVD-free.

    Defined for repeated singular values. Only the ``centered`` flag of the
    decompositions is consulted; everything else is recomputed from the
    shapes so this path stays independent of the SVD.
    """
    if decomp0 is not None:
        center = decomp0.centered
    s0 = check_shape(s0, "s0")
    s1 = check_shape(s1, "s1")
    if s0.shape != s1.shape:
        raise ShapeMismatchError(f"landmark counts differ: {s0.shape[0]} vs {s1.shape[0]}")
    g = _check_upstream(upstream, s0.shape[0])
    pts0 = center_shape(s0) if center else s0
    pts1 = center_shape(s1) if center else s1
    grad0 = projector_grad_closed_form(pts0, g)
    grad1 = projector_grad_closed_form(pts1, -g)
    return _uncenter_grad(grad0, center), _uncenter_grad(grad1, center)


def u_jacobian(svd, i, j, *, denominator="minus"):
    """dU/dS_ij (m x k) of the thin SVD factor U, for a single entry (i, j).

    ``denominator="minus"`` uses the Cramer solution of the coupled system,
    ``(d_l U_ik V_jl + d_k U_il V_jk) / (d_l^2 - d_k^2)``. ``"plus"`` swaps in
    ``d_l^2 + d_k^2``; it is kept only so the two forms can be compared
    against finite differences.
    """
    u, d, v = svd
    m, k = u.shape
    if denominator == "minus":
        sgn = -1.0
    elif denominator == "plus":
        sgn = 1.0
    else:
        raise ValueError(f"denominator must be 'minus' or 'plus', got {denominator!r}")
    omega = np.zeros((k, k))
    for a in range(k):
        for b in range(k):
            if a != b:
                omega[a, b] = (d[b] * u[i, a] * v[j, b] + d[a] * u[i, b] * v[j, a]) / (
                    d[b] ** 2 + sgn * d[a] ** 2
                )
    complement = -u @ u[i, :]
    complement[i] += 1.0  # (I - U U^T)[:, i]
    return u @ omega + np.outer(complement, v[j, :] / d)


@dataclass(frozen=True)
class GeodesicInfo:
    principal_cosines: np.ndarray
    geodesic_generator_eigenvalues: np.ndarray = field(repr=False)

    @property
    def principal_angles(self):
        return np.arccos(self.principal_cosines)


def geodesic_info(b, decomp0, decomp1):
    """Principal-angle cosines between the two subspaces and the spectrum of B.

    The nonzero eigenvalues of ``B`` come in pairs ``+-sin(theta_i)``.
    """
    m = decomp0.landmark_count
    b = kernels.as_matrix(b, "b")
    if b.shape != (m, m):
        raise ShapeMismatchError(f"feature must be {m}x{m}, got {b.shape}")
    cross = decomp0.basis.T @ decomp1.basis
    cosines = np.clip(kernels.thin_svd(cross).d, 0.0, 1.0)
    eigenvalues, _ = kernels.sym_eigen(b)
    return GeodesicInfo(principal_cosines=cosines, geodesic_generator_eigenvalues=eigenvalues)
