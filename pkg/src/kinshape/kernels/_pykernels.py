"""Pure-numpy fallback for the compiled kernels in ``_ckernels.pyx``.

Both modules expose the same two functions with the same semantics; the
package picks one at import time.
"""

import numpy as np

MAX_SWEEPS = 80


def jacobi_rotate(a, tol):
    """One-sided (Hestenes) Jacobi: rotate column pairs of ``a`` until they
    are mutually orthogonal.

    Returns ``(w, v)`` with ``w = a @ v``, ``v`` orthogonal and the columns of
    ``w`` pairwise orthogonal to relative tolerance ``tol``. Column norms of
    ``w`` are the (unsorted) singular values.
    """
    w = np.array(a, dtype=np.float64, order="C", copy=True)
    n = w.shape[1]
    v = np.eye(n)
    for _ in range(MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                wp = w[:, p].copy()
                wq = w[:, q].copy()
                alpha = wp @ wp
                beta = wq @ wq
                gamma = wp @ wq
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + np.sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                w[:, p] = c * wp - s * wq
                w[:, q] = s * wp + c * wq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        if not rotated:
            break
    return w, v


def jacobi_svd(a, tol, zero_tol):
    """Sorted, sign-fixed thin SVD built on :func:`jacobi_rotate`.

    Singular values at or below ``zero_tol * d_max`` are set to 0 and their
    ``u`` columns left as zeros for the caller to complete.
    """
    w, v = jacobi_rotate(a, tol)
    d = np.sqrt(np.einsum("ij,ij->j", w, w))
    order = np.argsort(-d, kind="stable")
    d = d[order]
    w = w[:, order]
    v = v[:, order]
    nonzero = (d > zero_tol * d[0]) & (d > 0.0)
    d = np.where(nonzero, d, 0.0)
    u = np.zeros_like(w)
    u[:, nonzero] = w[:, nonzero] / d[nonzero]
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[idx, np.arange(u.shape[1])] < 0.0, -1.0, 1.0)
    return u * signs, d, v * signs


def svd_grad_contract(u, d, v, w, r):
    """Contract dL/dU against dU/dS_ij for every entry (i, j) of S.

    ``w = U^T (dL/dU)`` and ``r = (I - U U^T) (dL/dU)`` are precomputed by the
    caller. For each (i, j) the in-span part of dU/dS_ij is ``U @ Omega`` where
    ``Omega[k, l]`` solves

        d_l * Ou + d_k * Ov =  U[i, k] V[j, l]
        d_k * Ou + d_l * Ov = -U[i, l] V[j, k]

    (Cramer's rule, determinant d_l^2 - d_k^2). Directions orthogonal to span(U)
    have zero singular value, so the same system collapses to
    ``Ou = U[i, k] V[j, l] / d_l``; summed over an orthonormal complement this
    gives the ``r`` term below without building the full m x m basis.
    """
    u = np.asarray(u, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n = d.shape[0]

    det = d[None, :] ** 2 - d[:, None] ** 2  # det[k, l]
    off = ~np.eye(n, dtype=bool)
    inv_det = np.zeros_like(det)
    inv_det[off] = 1.0 / det[off]

    # rhs1[i, j, k, l] = U[i, k] V[j, l];  rhs2[i, j, k, l] = -U[i, l] V[j, k]
    rhs1 = np.einsum("ik,jl->ijkl", u, v)
    rhs2 = -np.einsum("il,jk->ijkl", u, v)
    omega_u = (rhs1 * d[None, None, None, :] - d[None, None, :, None] * rhs2) * inv_det
    grad = np.einsum("ijkl,kl->ij", omega_u, w)
    grad += np.einsum("il,jl->ij", r / d[None, :], v)
    return grad
