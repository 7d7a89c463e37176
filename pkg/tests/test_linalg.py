import numpy as np
import pytest
from numpy.testing import assert_allclose

from services.exceptions import InvalidParameterError
from services.linalg import (
    dense_svd,
    gram_schmidt,
    orthonormal_completion,
    principal_sines,
    sin_angle,
    spectral_norm_2,
)


@pytest.mark.parametrize("shape", [(6, 4), (3, 5), (5, 5), (1, 3)])
def test_dense_svd_reconstructs(shape):
    m = np.random.default_rng(1).standard_normal(shape)
    u, s, v = dense_svd(m)
    k = min(shape)
    assert u.shape == (shape[0], k) and v.shape == (shape[1], k)
    assert_allclose(u @ np.diag(s) @ v.T, m, atol=1e-12)
    assert_allclose(u.T @ u, np.eye(k), atol=1e-12)
    assert_allclose(v.T @ v, np.eye(k), atol=1e-12)
    assert np.all(np.diff(s) <= 0)
    assert_allclose(s, np.linalg.svd(m, compute_uv=False), rtol=1e-12, atol=1e-14)


def test_dense_svd_rank_deficient_completes_left_vectors():
    a = np.array([1.0, 2.0, 2.0, 0.0])
    b = np.array([0.0, 3.0, 4.0])
    u, s, v = dense_svd(np.outer(a, b))
    assert_allclose(s, [15.0, 0.0, 0.0], atol=1e-12)
    assert_allclose(u.T @ u, np.eye(3), atol=1e-12)
    assert sin_angle(u[:, 0], a) < 1e-12


def test_dense_svd_rejects_non_finite():
    with pytest.raises(InvalidParameterError):
        dense_svd(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_spectral_norm_2():
    assert spectral_norm_2(np.diag([1.0, -4.0, 2.0])) == pytest.approx(4.0, abs=1e-14)
    assert spectral_norm_2(np.zeros((3, 2))) == 0.0


def test_sin_angle_properties():
    u = np.array([1.0, 0.0, 0.0])
    assert sin_angle(u, -3.0 * u) == 0.0
    assert sin_angle(u, np.array([0.0, 2.0, 0.0])) == pytest.approx(1.0)
    v = np.array([1.0, 1.0, 0.0])
    assert sin_angle(u, v) == pytest.approx(1.0 / np.sqrt(2.0))
    assert sin_angle(u, v) == pytest.approx(sin_angle(v, u))


def test_sin_angle_small_angle_is_accurate():
    u = np.array([1.0, 0.0])
    v = np.array([1.0, 1e-9])
    assert sin_angle(u, v) == pytest.approx(1e-9, rel=1e-6)


def test_sin_angle_zero_vector():
    with pytest.raises(InvalidParameterError):
        sin_angle(np.zeros(3), np.ones(3))


def test_principal_sines_rotation_within_subspace():
    q, _ = np.linalg.qr(np.random.default_rng(2).standard_normal((6, 2)))
    c, s = np.cos(0.3), np.sin(0.3)
    rotated = q @ np.array([[c, -s], [s, c]])
    assert np.max(principal_sines(q, rotated)) < 1e-12
    other = orthonormal_completion(q, 4)[:, 2:]
    assert_allclose(principal_sines(q, other), [1.0, 1.0], atol=1e-12)


def test_orthonormal_completion_keeps_columns():
    q, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((5, 2)))
    full = orthonormal_completion(q, 5)
    assert_allclose(full[:, :2], q)
    assert_allclose(full.T @ full, np.eye(5), atol=1e-12)
    with pytest.raises(InvalidParameterError):
        orthonormal_completion(q, 6)


def test_gram_schmidt_orthonormalizes_in_order():
    m = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]])
    out = gram_schmidt(m)
    assert_allclose(out.T @ out, np.eye(3), atol=1e-14)
    assert_allclose(out[:, 0], [1.0, 0.0, 0.0])
