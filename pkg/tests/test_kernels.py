import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kinshape import kernels
from kinshape.errors import InvalidInputError, ShapeMismatchError


def test_compiled_backend_is_available():
    # the package is built with the extension; the fallback must still exist
    assert "python" in kernels.BACKENDS
    assert "cython" in kernels.BACKENDS


def test_orthonormal_input_is_its_own_basis(backend):
    svd = kernels.thin_svd([[1, 0], [0, 1], [0, 0]], backend=backend)
    np.testing.assert_allclose(svd.d, [1, 1])
    np.testing.assert_allclose(svd.u @ svd.u.T, np.diag([1.0, 1.0, 0.0]), atol=1e-15)


def test_rank_one_surfaces_zero_singular_value(backend):
    svd = kernels.thin_svd([[2, 0], [0, 0], [0, 0]], backend=backend)
    np.testing.assert_array_equal(svd.d, [2.0, 0.0])
    np.testing.assert_allclose(svd.u.T @ svd.u, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(svd.reconstruct(), [[2, 0], [0, 0], [0, 0]], atol=1e-15)


@pytest.mark.parametrize("shape", [(5, 2), (68, 2), (7, 3), (4, 4)])
def test_reconstruction_and_orthonormality(backend, rng, shape):
    for _ in range(20):
        a = rng.standard_normal(shape) * rng.uniform(0.01, 100)
        svd = kernels.thin_svd(a, backend=backend)
        scale = max(1.0, np.linalg.norm(a))
        assert np.linalg.norm(svd.reconstruct() - a) <= 1e-10 * scale
        assert np.linalg.norm(svd.u.T @ svd.u - np.eye(shape[1])) <= 1e-10
        assert np.linalg.norm(svd.v.T @ svd.v - np.eye(shape[1])) <= 1e-10
        assert np.all(np.diff(svd.d) <= 0) and np.all(svd.d >= 0)
        # independent oracle: LAPACK singular values
        np.testing.assert_allclose(svd.d, np.linalg.svd(a, compute_uv=False), rtol=1e-12)


def test_sign_convention(backend, rng):
    svd = kernels.thin_svd(rng.standard_normal((10, 2)), backend=backend)
    idx = np.argmax(np.abs(svd.u), axis=0)
    assert np.all(svd.u[idx, [0, 1]] > 0)


def test_backends_agree(rng):
    a = rng.standard_normal((68, 2))
    py = kernels.thin_svd(a, backend="python")
    cy = kernels.thin_svd(a, backend="cython")
    for x, y in zip(py, cy):
        np.testing.assert_allclose(x, y, atol=1e-13)


def test_thin_svd_is_pure(rng):
    a = rng.standard_normal((9, 2))
    first = kernels.thin_svd(a)
    second = kernels.thin_svd(a.copy())
    for x, y in zip(first, second):
        np.testing.assert_array_equal(x, y)


def test_thin_svd_errors():
    with pytest.raises(InvalidInputError):
        kernels.thin_svd([[1.0, np.nan], [0, 1], [1, 1]])
    with pytest.raises(ShapeMismatchError):
        kernels.thin_svd(np.ones((2, 3)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.just(2)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_reconstruction_property(a):
    svd = kernels.thin_svd(a)
    assert np.linalg.norm(svd.reconstruct() - a) <= 1e-10 * max(1.0, np.linalg.norm(a))
    assert np.linalg.norm(svd.u.T @ svd.u - np.eye(2)) <= 1e-10


def test_sym_eigen_trivial():
    lam, q = kernels.sym_eigen(np.eye(3))
    np.testing.assert_allclose(lam, [1, 1, 1])
    lam, q = kernels.sym_eigen(np.diag([3.0, 1.0, -2.0]))
    np.testing.assert_allclose(lam, [3, 1, -2])


def _char_poly_eigs_3x3(a):
    # det(lambda I - a) = lambda^3 - c2 lambda^2 + c1 lambda - c0
    c2 = np.trace(a)
    c1 = (a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0] + a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]
          + a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
    c0 = (a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
          - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
          + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]))
    roots = np.roots([1.0, -c2, c1, -c0])
    return np.sort(roots.real)[::-1]


def test_sym_eigen_projector_difference_matches_characteristic_polynomial(rng):
    for _ in range(25):
        u0, _ = np.linalg.qr(rng.standard_normal((3, 2)))
        u1, _ = np.linalg.qr(rng.standard_normal((3, 2)))
        b = u0 @ u0.T - u1 @ u1.T
        lam, q = kernels.sym_eigen(b)
        np.testing.assert_allclose(lam, _char_poly_eigs_3x3(b), atol=1e-7)
        assert np.all(np.abs(lam) <= 1 + 1e-12)
        np.testing.assert_allclose(lam[0], -lam[2], atol=1e-12)
        assert abs(lam[1]) < 1e-12
        assert np.linalg.norm(b @ q - q * lam) <= 1e-9 * max(1.0, np.linalg.norm(b))
        assert np.linalg.norm(q.T @ q - np.eye(3)) <= 1e-9


def test_sym_eigen_rejects_asymmetric():
    with pytest.raises(InvalidInputError):
        kernels.sym_eigen([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ShapeMismatchError):
        kernels.sym_eigen(np.ones((2, 3)))


def test_matrix_plumbing(rng):
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    c = rng.standard_normal((2, 5))
    np.testing.assert_array_equal(kernels.matmul(np.eye(3), a), a)
    np.testing.assert_allclose(kernels.transpose(kernels.matmul(a, b)),
                               kernels.matmul(kernels.transpose(b), kernels.transpose(a)), atol=1e-15)
    lhs = kernels.matmul(kernels.matmul(a, b), c)
    rhs = kernels.matmul(a, kernels.matmul(b, c))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10
    assert kernels.frobenius_norm([[3, 4]]) == 5.0
    np.testing.assert_array_equal(kernels.hadamard(a, a), a * a)
    np.testing.assert_array_equal(kernels.subtract(kernels.add(a, a), a), a)


@pytest.mark.parametrize("op", [kernels.matmul, kernels.hadamard, kernels.add, kernels.subtract])
def test_shape_errors(op):
    with pytest.raises(ShapeMismatchError):
        op(np.ones((2, 3)), np.ones((2, 2)))


def test_svd_grad_contract_backends_agree(rng):
    svd = kernels.thin_svd(rng.standard_normal((12, 2)))
    g = rng.standard_normal((12, 12))
    gu = (g + g.T) @ svd.u
    w = svd.u.T @ gu
    r = gu - svd.u @ w
    out_py = kernels.svd_grad_contract(*svd, w, r, backend="python")
    out_cy = kernels.svd_grad_contract(*svd, w, r, backend="cython")
    np.testing.assert_allclose(out_py, out_cy, rtol=1e-12, atol=1e-14)
