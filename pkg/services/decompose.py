"""
Descomposición de tensores odeco
Iteración de gradiente con arranques aleatorios y deflación, refinamiento
posterior y HOSVD como comparador.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from services.exceptions import DegeneratePointError, DimensionMismatchError, InvalidParameterError
from services.linalg import dense_svd, gram_schmidt, orthonormal_completion, sin_angle
from services.odeco import OdecoTensor, SingularTuple, to_dense
from services.tensor_core import (
    DEGENERATE_NORM,
    DenseTensor,
    Rank1Point,
    contract_all_but,
    frobenius_norm,
    matricize,
    outer,
    random_rank1_point,
    rank1_value,
)

logger = logging.getLogger(__name__)

DEFLATION_MODES = ("orthogonal_complement", "subtract")
DUPLICATE_SIN = 1e-6
NEGLIGIBLE_VALUE = 1e-12


@dataclass(frozen=True)
class IterationConfig:
    """Parámetros de la iteración de gradiente y de la deflación."""

    tol: float = 1e-12
    max_iter: int = 1000
    restarts: int = 50
    deflation_mode: str = "orthogonal_complement"

    def __post_init__(self):
        if self.tol <= 0:
            raise InvalidParameterError("tol debe ser > 0")
        if self.max_iter < 1:
            raise InvalidParameterError("max_iter debe ser >= 1")
        if self.restarts < 1:
            raise InvalidParameterError("restarts debe ser >= 1")
        if self.deflation_mode not in DEFLATION_MODES:
            raise InvalidParameterError(f"deflation_mode debe ser uno de {DEFLATION_MODES}")


@dataclass(frozen=True, eq=False)
class DecompositionResult:
    """Salida de decompose_odeco / refine."""

    odeco: OdecoTensor
    requested: int
    found: int
    iterations: Tuple[int, ...] = field(default_factory=tuple)

    @property
    def complete(self) -> bool:
        return self.found >= self.requested


# ============ ITERACIÓN ============

def gradient_step(t: DenseTensor, x: Rank1Point) -> Rank1Point:
    """
    G(x): cada factor se reemplaza por la contracción normalizada sobre los
    demás modos, todas calculadas desde x (actualización simultánea).
    """
    if x.dims != t.dims:
        raise DimensionMismatchError(f"el punto tiene dimensiones {x.dims}, el tensor {t.dims}")
    p = t.order
    new = []
    for q in range(p):
        g = contract_all_but(t, q, [x.factors[s] for s in range(p) if s != q])
        norm = np.linalg.norm(g)
        if norm <= DEGENERATE_NORM:
            raise DegeneratePointError(f"contracción nula en el modo {q}")
        new.append(g / norm)
    return Rank1Point(tuple(new))


def _project(point: Rank1Point, projectors: Optional[List[np.ndarray]]) -> Rank1Point:
    if projectors is None:
        return point
    vecs = []
    for q, v in enumerate(point.factors):
        basis = projectors[q]
        w = v - basis @ (basis.T @ v) if basis.shape[1] else v
        if np.linalg.norm(w) <= DEGENERATE_NORM:
            raise DegeneratePointError(f"proyección nula en el modo {q}")
        vecs.append(w)
    return Rank1Point.normalized(vecs)


def _iterate(
    t: DenseTensor,
    init: Rank1Point,
    cfg: IterationConfig,
    projectors: Optional[List[np.ndarray]] = None,
) -> SingularTuple:
    x = _project(init, projectors)
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        nxt = _project(gradient_step(t, x), projectors)
        change = max(sin_angle(a, b) for a, b in zip(nxt.factors, x.factors))
        x = nxt
        if change < cfg.tol:
            converged = True
            break

    value = rank1_value(t, x)
    vectors = list(x.factors)
    if value < 0:
        vectors[0] = -vectors[0]
        value = -value
    if not converged:
        logger.debug("La iteración no convergió en %d pasos", cfg.max_iter)
    return SingularTuple(value, tuple(vectors), converged=converged, iterations=iterations)


def find_tuple(t: DenseTensor, init: Rank1Point, cfg: Optional[IterationConfig] = None) -> SingularTuple:
    """
    Itera gradient_step desde init hasta que el máximo seno entre factores
    sucesivos sea < cfg.tol o se agote cfg.max_iter.

    Devuelve lambda = |<T, límite>| con el signo del modo 1 ajustado para
    que el valor sea no negativo. Si no converge, la tupla lleva
    converged=False y el último iterado.
    """
    return _iterate(t, init, cfg or IterationConfig())


# ============ DESCOMPOSICIÓN ============

def _is_duplicate(vectors: Sequence[np.ndarray], found: List[Tuple[float, Tuple[np.ndarray, ...]]]) -> bool:
    for _, other in found:
        if all(sin_angle(a, b) <= DUPLICATE_SIN for a, b in zip(vectors, other)):
            return True
    return False


def _assemble(
    dims: Sequence[int],
    found: List[Tuple[float, Tuple[np.ndarray, ...]]],
) -> OdecoTensor:
    """Orden estable descendente, Gram-Schmidt por modo y completado a d_min."""
    d_min = min(dims)
    p = len(dims)
    order = sorted(range(len(found)), key=lambda i: -found[i][0])
    lambdas = np.array([found[i][0] for i in order] + [0.0] * (d_min - len(found)))
    factors = []
    for q in range(p):
        if found:
            cols = np.column_stack([found[i][1][q] for i in order])
            cols = gram_schmidt(cols)
        else:
            cols = np.zeros((dims[q], 0))
        factors.append(orthonormal_completion(cols, d_min))
    return OdecoTensor(lambdas, tuple(factors))


def decompose_odeco(
    t: DenseTensor,
    r: int,
    cfg: Optional[IterationConfig] = None,
    seed: int = 0,
) -> DecompositionResult:
    """
    Recupera r componentes de forma secuencial.

    En cada paso se lanzan cfg.restarts arranques aleatorios y se acepta la
    tupla convergida de mayor valor. Con orthogonal_complement los arranques
    (y cada iterado) se proyectan al complemento ortogonal de los factores ya
    hallados en cada modo; con subtract la componente aceptada se resta del
    tensor de trabajo. Las tuplas que repiten una ya hallada (sin∠ <= 1e-6
    en todos los modos) se descartan.

    Si no se logran r tuplas se devuelve un resultado parcial con
    complete = False.
    """
    cfg = cfg or IterationConfig()
    d_min = min(t.dims)
    if not 1 <= r <= d_min:
        raise InvalidParameterError(f"r = {r} debe estar entre 1 y d_min = {d_min}")
    p = t.order
    floor = NEGLIGIBLE_VALUE * frobenius_norm(t)
    working = t
    found: List[Tuple[float, Tuple[np.ndarray, ...]]] = []
    iterations: List[int] = []

    for step in range(r):
        projectors = None
        if cfg.deflation_mode == "orthogonal_complement":
            projectors = [
                np.column_stack([vecs[q] for _, vecs in found]) if found else np.zeros((t.dims[q], 0))
                for q in range(p)
            ]
        best: Optional[SingularTuple] = None
        for attempt in range(cfg.restarts):
            rng = np.random.default_rng([seed, step, attempt])
            init = random_rank1_point(t.dims, rng)
            try:
                candidate = _iterate(working, init, cfg, projectors)
            except DegeneratePointError:
                logger.debug("Arranque %d del paso %d degenerado", attempt, step)
                continue
            if not candidate.converged or candidate.value <= floor:
                continue
            if _is_duplicate(candidate.vectors, found):
                continue
            if best is None or candidate.value > best.value:
                best = candidate

        if best is None:
            logger.warning("Paso %d: ninguna tupla nueva tras %d arranques", step, cfg.restarts)
            break
        found.append((best.value, best.vectors))
        iterations.append(best.iterations)
        logger.debug("Paso %d: lambda = %.12g (%d iteraciones)", step, best.value, best.iterations)
        if cfg.deflation_mode == "subtract":
            working = DenseTensor(working.values - best.value * outer(best.vectors).values)

    result = DecompositionResult(_assemble(t.dims, found), r, len(found), tuple(iterations))
    logger.info("✓ Descomposición: %d de %d componentes", result.found, r)
    return result


def refine(t: DenseTensor, result: DecompositionResult, cfg: Optional[IterationConfig] = None) -> DecompositionResult:
    """
    Vuelve a ejecutar find_tuple sobre el tensor sin deflactar partiendo de
    cada componente hallada y reensambla la descomposición.
    """
    cfg = cfg or IterationConfig()
    found = []
    iterations = []
    for k in range(result.found):
        start = Rank1Point.normalized(result.odeco.component(k))
        try:
            tup = find_tuple(t, start, cfg)
        except DegeneratePointError:
            tup = SingularTuple(float(result.odeco.lambdas[k]), result.odeco.component(k), converged=False)
        found.append((tup.value, tup.vectors))
        iterations.append(tup.iterations)
    return DecompositionResult(_assemble(t.dims, found), result.requested, result.found, tuple(iterations))


# ============ HOSVD ============

def hosvd(t: DenseTensor) -> OdecoTensor:
    """
    Vectores singulares izquierdos de cada Mat_q(T); los valores salen del
    modo 1. Con valores singulares repetidos sólo el subespacio está
    identificado y la base dentro del bloque es arbitraria.
    """
    d_min = min(t.dims)
    factors = []
    lambdas = None
    for q in range(t.order):
        u, sigma, _ = dense_svd(matricize(t, q))
        factors.append(u[:, :d_min].copy())
        if q == 0:
            lambdas = sigma[:d_min].copy()
    for k in range(d_min):
        value = rank1_value(t, Rank1Point(tuple(f[:, k] for f in factors)))
        if value < 0:
            factors[0][:, k] *= -1.0
    return OdecoTensor(lambdas, tuple(factors))


@dataclass(frozen=True)
class HosvdBoundRow:
    k: int
    gap: float
    gap_bound: float
    max_sin: float
    sin_bound: float

    @property
    def passed(self) -> bool:
        return self.gap <= self.gap_bound + 1e-10 and self.max_sin <= self.sin_bound + 1e-10


def hosvd_bounds(a: OdecoTensor, b: OdecoTensor) -> List[HosvdBoundRow]:
    """
    Cotas por matricización: |lambda_k - lambda~_k| <= min_q ||Mat_q(T) - Mat_q(T~)||
    y sin∠(u_k, u~_k) <= 2 ||Mat_q(T) - Mat_q(T~)|| / brecha_k cuando lambda_k es
    simple (infinito en otro caso).
    """
    if a.dims != b.dims:
        raise DimensionMismatchError(f"dimensiones distintas: {a.dims} y {b.dims}")
    diff = DenseTensor(to_dense(a).values - to_dense(b).values)
    mat_norms = [float(dense_svd(matricize(diff, q))[1][0]) for q in range(a.order)]
    lam = a.lambdas
    rows = []
    for k in range(a.d_min):
        upper = lam[k - 1] - lam[k] if k > 0 else np.inf
        lower = lam[k] - lam[k + 1] if k + 1 < a.d_min else np.inf
        gap = min(upper, lower)
        sines = [sin_angle(a.factors[q][:, k], b.factors[q][:, k]) for q in range(a.order)]
        bounds = [2.0 * mat_norms[q] / gap if gap > 0 else np.inf for q in range(a.order)]
        worst = int(np.argmax(np.array(sines) - np.array(bounds)))
        rows.append(HosvdBoundRow(
            k=k,
            gap=abs(float(lam[k] - b.lambdas[k])),
            gap_bound=min(mat_norms),
            max_sin=sines[worst],
            sin_bound=min(bounds[worst], 1.0) if np.isfinite(bounds[worst]) else np.inf,
        ))
    return rows
