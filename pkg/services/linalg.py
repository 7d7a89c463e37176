"""
Álgebra lineal densa
SVD por Jacobi de un solo lado (Hestenes), senos de ángulos y completado ortonormal
"""
import logging
from typing import Tuple

import numpy as np

from services.exceptions import InvalidParameterError

logger = logging.getLogger(__name__)

JACOBI_THRESHOLD = 1e-13
JACOBI_MAX_SWEEPS = 80


# ============ SVD ============

def _hestenes(m: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Jacobi de un solo lado sobre las columnas de m (filas >= columnas)."""
    work = np.array(m, dtype=float, copy=True)
    n = work.shape[1]
    v = np.eye(n)

    for sweep in range(JACOBI_MAX_SWEEPS):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = float(work[:, i] @ work[:, i])
                beta = float(work[:, j] @ work[:, j])
                gamma = float(work[:, i] @ work[:, j])
                if alpha == 0.0 or beta == 0.0:
                    continue
                if abs(gamma) <= JACOBI_THRESHOLD * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                col_i = work[:, i].copy()
                work[:, i] = c * col_i - s * work[:, j]
                work[:, j] = s * col_i + c * work[:, j]
                row_i = v[:, i].copy()
                v[:, i] = c * row_i - s * v[:, j]
                v[:, j] = s * row_i + c * v[:, j]
        if not rotated:
            logger.debug("Jacobi convergió en %d barridos", sweep + 1)
            break
    else:
        logger.warning("Jacobi alcanzó %d barridos sin converger", JACOBI_MAX_SWEEPS)

    sigma = np.linalg.norm(work, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    work = work[:, order]
    v = v[:, order]

    scale = sigma[0] if sigma.size else 0.0
    keep = sigma > scale * 1e-14 if scale > 0.0 else np.zeros(n, dtype=bool)
    u = np.zeros_like(work)
    u[:, keep] = work[:, keep] / sigma[keep]
    if not np.all(keep):
        u = orthonormal_completion(u[:, keep], n)
    return u, sigma, v


def dense_svd(m: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    SVD delgada de una matriz densa: m = U diag(sigma) V^T

    Args:
        m: matriz real finita de forma (filas, columnas)

    Returns:
        (U, sigma, V) con k = min(filas, columnas) columnas, sigma descendente.
        Columnas de U asociadas a sigma = 0 se completan ortonormalmente.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise InvalidParameterError(f"dense_svd espera una matriz, recibió ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise InvalidParameterError("dense_svd requiere entradas finitas")
    if m.shape[0] >= m.shape[1]:
        return _hestenes(m)
    v, sigma, u = _hestenes(m.T)
    return u, sigma, v


def spectral_norm_2(m: np.ndarray) -> float:
    """Norma espectral de una matriz (mayor valor singular)."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    return float(dense_svd(m)[1][0])


# ============ ÁNGULOS ============

def sin_angle(u: np.ndarray, v: np.ndarray) -> float:
    """
    Seno del ángulo agudo entre dos vectores, en [0, 1].

    Usa ||û - v̂|| ||û + v̂|| / 2, que es simétrica, invariante al signo
    y precisa cerca de cero.
    """
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise InvalidParameterError(f"longitudes distintas: {u.shape[0]} y {v.shape[0]}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise InvalidParameterError("sin_angle no está definido para el vector cero")
    uh = u / nu
    vh = v / nv
    value = np.linalg.norm(uh - vh) * np.linalg.norm(uh + vh) / 2.0
    return float(min(max(value, 0.0), 1.0))


def principal_sines(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    Senos de los ángulos principales entre los espacios columna de dos
    matrices con columnas ortonormales, en orden descendente.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[0] != v.shape[0]:
        raise InvalidParameterError("principal_sines requiere el mismo número de filas")
    residual = v - u @ (u.T @ v)
    sines = dense_svd(residual)[1]
    return np.clip(sines, 0.0, 1.0)


# ============ ORTONORMALIZACIÓN ============

def orthonormal_completion(q: np.ndarray, n_total: int) -> np.ndarray:
    """
    Completa columnas ortonormales q (d x k) hasta d x n_total.

    Las columnas nuevas salen de la QR de [q, I]; son deterministas.
    """
    q = np.asarray(q, dtype=float)
    d, k = q.shape
    if n_total > d:
        raise InvalidParameterError(f"no se pueden completar {n_total} columnas en dimensión {d}")
    if k >= n_total:
        return q[:, :n_total].copy()
    full, _ = np.linalg.qr(np.hstack([q, np.eye(d)]))
    return np.hstack([q, full[:, k:n_total]])


def gram_schmidt(m: np.ndarray) -> np.ndarray:
    """Gram-Schmidt modificado (dos pasadas) columna a columna, sin reordenar."""
    m = np.array(m, dtype=float, copy=True)
    d, n = m.shape
    out = np.zeros_like(m)
    for j in range(n):
        col = m[:, j]
        for _ in range(2):
            col = col - out[:, :j] @ (out[:, :j].T @ col)
        norm = np.linalg.norm(col)
        if norm <= 1e-12:
            # columna dependiente: se reemplaza por el completado
            out[:, : j + 1] = orthonormal_completion(out[:, :j], j + 1)
        else:
            out[:, j] = col / norm
    return out
