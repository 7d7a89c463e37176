"""
Tensores CP incoherentes
Defecto de isometría, factor polar, proyección odeco y verificación de las
cotas para factores casi ortonormales.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from services.exceptions import DimensionMismatchError, InvalidParameterError, RankDeficientError
from services.linalg import dense_svd, sin_angle
from services.odeco import OdecoTensor, to_dense
from services.perturb import GENERAL_C, Matching, match_tuples
from services.tensor_core import DenseTensor, SpectralNormConfig, spectral_norm_with, tensor_sub

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class IncoherentCP:
    """
    X = sum_k eta_k a_k^(1) ⊗ ... ⊗ a_k^(p) con columnas unitarias no
    necesariamente ortogonales. delta se recalcula siempre desde los
    valores singulares.
    """

    etas: np.ndarray
    factors: Tuple[np.ndarray, ...]

    def __post_init__(self):
        etas = np.array(self.etas, dtype=float, copy=True).ravel()
        factors = tuple(np.array(f, dtype=float, copy=True) for f in self.factors)
        r = etas.shape[0]
        if len(factors) < 2:
            raise InvalidParameterError("se necesitan al menos dos modos")
        if any(f.ndim != 2 or f.shape[1] != r for f in factors):
            raise DimensionMismatchError(f"cada factor debe tener {r} columnas")
        if np.any(etas <= 0):
            raise InvalidParameterError("los pesos eta deben ser positivos")
        for q, f in enumerate(factors):
            if np.max(np.abs(np.linalg.norm(f, axis=0) - 1.0)) > UNIT_TOL:
                raise InvalidParameterError(f"las columnas del modo {q} no son unitarias")
            if f.shape[1] > f.shape[0]:
                raise InvalidParameterError(f"r = {r} excede d_{q} = {f.shape[0]}")
            f.setflags(write=False)
        etas.setflags(write=False)
        object.__setattr__(self, "etas", etas)
        object.__setattr__(self, "factors", factors)

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    @property
    def r(self) -> int:
        return self.etas.shape[0]

    @property
    def delta(self) -> float:
        return max(isometry_delta(f) for f in self.factors)

    def to_dense(self) -> DenseTensor:
        letters = "abcdefghijlmnopqrstuvwxy"[: self.order]
        subscripts = "k," + ",".join(f"{c}k" for c in letters) + "->" + letters
        return DenseTensor(np.einsum(subscripts, self.etas, *self.factors, optimize="greedy"))


def random_incoherent(
    dims: Sequence[int],
    r: int,
    etas: Optional[Sequence[float]] = None,
    spread: float = 0.05,
    seed: int = 0,
) -> IncoherentCP:
    """Columnas ortonormales más ruido gaussiano de escala spread, renormalizadas."""
    dims = tuple(int(d) for d in dims)
    if not 1 <= r <= min(dims):
        raise InvalidParameterError(f"r = {r} debe estar entre 1 y {min(dims)}")
    rng = np.random.default_rng(seed)
    factors = []
    for d in dims:
        q, _ = np.linalg.qr(rng.standard_normal((d, r)))
        a = q + spread * rng.standard_normal((d, r)) / np.sqrt(d)
        factors.append(a / np.linalg.norm(a, axis=0))
    if etas is None:
        etas = np.sort(rng.uniform(1.0, 10.0, r))[::-1]
    return IncoherentCP(np.asarray(etas, dtype=float), tuple(factors))


# ============ ISOMETRÍA Y FACTOR POLAR ============

def isometry_delta(a: np.ndarray) -> float:
    """max(|sigma_max - 1|, |1 - sigma_min|) de A (r <= d)."""
    a = np.asarray(a, dtype=float)
    if a.shape[1] > a.shape[0]:
        raise InvalidParameterError(f"r = {a.shape[1]} excede d = {a.shape[0]}")
    sigma = dense_svd(a)[1]
    return float(max(abs(sigma[0] - 1.0), abs(1.0 - sigma[-1])))


def polar_factor(a: np.ndarray) -> np.ndarray:
    """U = A (A^T A)^{-1/2} = izquierda · derecha^T de la SVD."""
    a = np.asarray(a, dtype=float)
    u, sigma, v = dense_svd(a)
    if a.shape[1] > a.shape[0] or sigma[-1] <= 1e-12 * max(sigma[0], 1e-300):
        raise RankDeficientError("el factor polar requiere rango columna completo")
    return u @ v.T


def _projection(x: IncoherentCP) -> Tuple[OdecoTensor, np.ndarray]:
    order = np.argsort(-x.etas, kind="stable")
    polar = [polar_factor(f) for f in x.factors]
    return OdecoTensor.from_components(x.etas, polar), order


def odeco_projection(x: IncoherentCP) -> OdecoTensor:
    """
    Reemplaza cada A^(q) por su factor polar, conserva eta como lambda
    (orden descendente estable, columnas emparejadas) y completa hasta d_min.
    """
    return _projection(x)[0]


# ============ VERIFICACIÓN ============

@dataclass(frozen=True)
class ProjectionReport:
    """Distancia a la proyección y ángulos de columna frente a delta."""

    delta: float
    distance: float
    distance_bound: float
    max_column_sin: float
    stated_angle_bound: float
    provable_angle_bound: float
    polar_gap: float

    @property
    def distance_holds(self) -> bool:
        return self.distance <= self.distance_bound + 1e-6

    @property
    def angle_holds(self) -> bool:
        return self.max_column_sin <= self.provable_angle_bound + 1e-9

    @property
    def stated_angle_holds(self) -> bool:
        return self.max_column_sin <= self.stated_angle_bound + 1e-9

    @property
    def passed(self) -> bool:
        return self.distance_holds and self.angle_holds


def verify_projection(x: IncoherentCP, cfg: Optional[SpectralNormConfig] = None) -> ProjectionReport:
    """
    ||X - T|| <= (p+1) delta eta_1 y sin∠(a_k^(q), u_k^(q)) <= delta.

    También informa delta/√2; esa cota más fina falla con dos columnas
    simétricas, así que sólo se reporta.
    """
    t, order = _projection(x)
    delta = x.delta
    distance, _ = spectral_norm_with(tensor_sub(x.to_dense(), to_dense(t)), cfg or SpectralNormConfig())
    worst = 0.0
    polar_gap = 0.0
    for q in range(x.order):
        polar = t.factors[q][:, : x.r]
        original = x.factors[q][:, order]
        polar_gap = max(polar_gap, float(dense_svd(original - polar)[1][0]))
        for k in range(x.r):
            worst = max(worst, sin_angle(original[:, k], polar[:, k]))
    return ProjectionReport(
        delta=delta,
        distance=distance,
        distance_bound=(x.order + 1) * delta * float(np.max(x.etas)),
        max_column_sin=worst,
        stated_angle_bound=delta / np.sqrt(2.0),
        provable_angle_bound=delta,
        polar_gap=polar_gap,
    )


@dataclass(frozen=True)
class IncoherentRow:
    k: int
    eta: float
    eta_tilde: float
    gap: float
    max_sin: float
    gap_bound: float
    angle_bound: float
    gap_ratio: float
    angle_ratio: float

    @property
    def passed(self) -> bool:
        return self.gap <= self.gap_bound + 1e-8 and self.max_sin <= self.angle_bound + 1e-8


@dataclass(frozen=True, eq=False)
class IncoherentReport:
    rows: Tuple[IncoherentRow, ...]
    delta: float
    cp_distance: float
    matching: Matching

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)


def verify_incoherent(
    x: IncoherentCP,
    y: IncoherentCP,
    cfg: Optional[SpectralNormConfig] = None,
) -> IncoherentReport:
    """
    Proyecta ambos tensores, los empareja con match_tuples y contrasta
    |eta_k - eta~_pi(k)| con C[(p+1)delta(eta_1 + eta~_1) + ||X - X~||] y
    max_q sin∠(a_k^(q), a~_pi(k)^(q)) con C{... + delta}/eta_k, C = 17.
    Las razones crudas (sin C) se informan aparte.
    """
    if x.dims != y.dims:
        raise DimensionMismatchError(f"dimensiones distintas: {x.dims} y {y.dims}")
    t, order_x = _projection(x)
    t_tilde, order_y = _projection(y)
    delta = max(x.delta, y.delta)
    cp_distance, _ = spectral_norm_with(tensor_sub(x.to_dense(), y.to_dense()), cfg or SpectralNormConfig())
    matching = match_tuples(t, t_tilde)
    p = x.order
    base = (p + 1) * delta * (float(np.max(x.etas)) + float(np.max(y.etas))) + cp_distance

    def column(cp: IncoherentCP, proj: OdecoTensor, order: np.ndarray, q: int, k: int) -> np.ndarray:
        if k < cp.r:
            return cp.factors[q][:, order[k]]
        return proj.factors[q][:, k]

    rows = []
    for k in range(x.r):
        j = int(matching.pi[k])
        eta = float(t.lambdas[k])
        eta_t = float(t_tilde.lambdas[j])
        max_sin = max(
            sin_angle(column(x, t, order_x, q, k), column(y, t_tilde, order_y, q, j)) for q in range(p)
        )
        angle_base = base + delta
        rows.append(IncoherentRow(
            k=k, eta=eta, eta_tilde=eta_t, gap=abs(eta - eta_t), max_sin=max_sin,
            gap_bound=GENERAL_C * base, angle_bound=GENERAL_C * angle_base / eta,
            gap_ratio=abs(eta - eta_t) / base if base > 0 else float("nan"),
            angle_ratio=max_sin * eta / angle_base if angle_base > 0 else float("nan"),
        ))
    report = IncoherentReport(tuple(rows), delta, cp_distance, matching)
    logger.debug("Incoherente: delta = %.4g, ||X - X~|| = %.4g", delta, cp_distance)
    return report
