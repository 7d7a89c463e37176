"""
Tensores odeco (ortogonalmente descomponibles)
Tipo, validación, realización densa y enumeración cerrada de todas las
tuplas singulares (esenciales y no esenciales).
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from services.exceptions import DimensionMismatchError, InvalidParameterError
from services.linalg import orthonormal_completion
from services.tensor_core import DenseTensor, Rank1Point, contract_all_but

logger = logging.getLogger(__name__)

ZERO_INNER = 1e-10
MAX_ENUMERATED = 200_000


# ============ TIPOS ============

@dataclass(frozen=True, eq=False)
class OdecoTensor:
    """
    T = sum_k lambda_k u_k^(1) ⊗ ... ⊗ u_k^(p)

    lambdas tiene longitud d_min y cada factor U^(q) es d_q x d_min.
    El constructor sólo comprueba formas; validate() informa del resto.
    """

    lambdas: np.ndarray
    factors: Tuple[np.ndarray, ...]

    def __post_init__(self):
        lambdas = np.array(self.lambdas, dtype=float, copy=True).ravel()
        factors = tuple(np.array(f, dtype=float, copy=True) for f in self.factors)
        if len(factors) < 2:
            raise InvalidParameterError("un tensor odeco necesita al menos dos modos")
        d_min = min(f.shape[0] for f in factors)
        if any(f.ndim != 2 or f.shape[1] != d_min for f in factors):
            raise DimensionMismatchError(f"cada factor debe tener d_min = {d_min} columnas")
        if lambdas.shape[0] != d_min:
            raise DimensionMismatchError(f"se esperaban {d_min} valores singulares, recibidos {lambdas.shape[0]}")
        if not (np.all(np.isfinite(lambdas)) and all(np.all(np.isfinite(f)) for f in factors)):
            raise InvalidParameterError("el tensor odeco contiene valores no finitos")
        lambdas.setflags(write=False)
        for f in factors:
            f.setflags(write=False)
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "factors", factors)

    @classmethod
    def from_components(cls, lambdas: Sequence[float], factors: Sequence[np.ndarray]) -> "OdecoTensor":
        """
        Construye desde r componentes: fuerza lambda >= 0 invirtiendo la
        columna del modo 1, ordena de forma estable en orden descendente y
        completa hasta d_min con ceros y columnas ortonormales.
        """
        lambdas = np.array(lambdas, dtype=float, copy=True).ravel()
        factors = [np.array(f, dtype=float, copy=True).reshape(np.shape(f)[0], -1) for f in factors]
        r = lambdas.shape[0]
        if any(f.shape[1] != r for f in factors):
            raise DimensionMismatchError(f"cada factor debe tener {r} columnas")
        d_min = min(f.shape[0] for f in factors)
        if r > d_min:
            raise InvalidParameterError(f"r = {r} excede d_min = {d_min}")

        negative = lambdas < 0
        lambdas[negative] = -lambdas[negative]
        factors[0][:, negative] *= -1.0

        order = np.argsort(-lambdas, kind="stable")
        lambdas = lambdas[order]
        factors = [f[:, order] for f in factors]

        if r < d_min:
            lambdas = np.concatenate([lambdas, np.zeros(d_min - r)])
            factors = [orthonormal_completion(f, d_min) for f in factors]
        return cls(lambdas, tuple(factors))

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    @property
    def d_min(self) -> int:
        return self.lambdas.shape[0]

    @property
    def rank(self) -> int:
        """Número de valores singulares positivos."""
        return int(np.count_nonzero(self.lambdas > 0))

    def component(self, k: int) -> Tuple[np.ndarray, ...]:
        return tuple(f[:, k] for f in self.factors)


@dataclass(frozen=True, eq=False)
class SingularTuple:
    """
    Tupla (lambda; v^(1), ..., v^(p)).

    active_set usa índices desde 0 y queda vacío para tuplas con lambda = 0;
    es None cuando la tupla viene de una iteración y no se conoce. signs es
    una matriz p x |S| con prod_q chi_k^(q) = 1 para cada k.
    """

    value: float
    vectors: Tuple[np.ndarray, ...]
    active_set: Optional[Tuple[int, ...]] = None
    signs: Optional[np.ndarray] = None
    converged: bool = True
    iterations: int = 0

    def point(self) -> Rank1Point:
        return Rank1Point.normalized(self.vectors)


@dataclass(frozen=True)
class OdecoDiagnostics:
    """Resultado de validate()."""

    orthonormality: Tuple[float, ...]
    ordering_violation: float
    negativity_violation: float
    tol: float
    ok: bool = field(default=False)

    @property
    def max_orthonormality(self) -> float:
        return max(self.orthonormality)


# ============ OPERACIONES ============

def validate(t: OdecoTensor, tol: float = 1e-10) -> OdecoDiagnostics:
    """
    Informa la violación máxima de ortonormalidad por modo, de orden
    descendente de lambda y de no negatividad. Nunca lanza.
    """
    ortho = tuple(
        float(np.max(np.abs(f.T @ f - np.eye(f.shape[1])))) if f.size else 0.0
        for f in t.factors
    )
    lam = t.lambdas
    ordering = float(np.max(np.clip(np.diff(lam), 0.0, None))) if lam.size > 1 else 0.0
    negativity = float(np.max(np.clip(-lam, 0.0, None))) if lam.size else 0.0
    ok = max(ortho) <= tol and ordering <= tol and negativity <= tol
    if not ok:
        logger.info("Tensor odeco con violaciones: orto=%s orden=%.3g neg=%.3g", ortho, ordering, negativity)
    return OdecoDiagnostics(ortho, ordering, negativity, tol, ok)


def to_dense(t: OdecoTensor) -> DenseTensor:
    """sum_k lambda_k u_k^(1) ⊗ ... ⊗ u_k^(p) entrada a entrada."""
    letters = "abcdefghijlmnopqrstuvwxy"[: t.order]
    subscripts = "k," + ",".join(f"{c}k" for c in letters) + "->" + letters
    return DenseTensor(np.einsum(subscripts, t.lambdas, *t.factors, optimize="greedy"))


def random_odeco(
    dims: Sequence[int],
    r: int,
    lambdas: Optional[Sequence[float]] = None,
    seed: int = 0,
) -> OdecoTensor:
    """
    Tensor odeco aleatorio con factores de Haar (QR de matrices normales).

    Args:
        dims: dimensiones (d_1, ..., d_p)
        r: número de valores singulares positivos, 1 <= r <= d_min
        lambdas: r valores no negativos; por defecto uniformes en [1, 10]
        seed: semilla del generador
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise InvalidParameterError(f"dimensiones inválidas: {dims}")
    d_min = min(dims)
    if not 1 <= r <= d_min:
        raise InvalidParameterError(f"r = {r} debe estar entre 1 y d_min = {d_min}")
    rng = np.random.default_rng(seed)
    factors = []
    for d in dims:
        q, rr = np.linalg.qr(rng.standard_normal((d, d_min)))
        factors.append(q * np.where(np.diag(rr) < 0, -1.0, 1.0))
    if lambdas is None:
        lam = rng.uniform(1.0, 10.0, r)
    else:
        lam = np.asarray(lambdas, dtype=float).ravel()
        if lam.shape[0] != r:
            raise InvalidParameterError(f"se esperaban {r} valores singulares, recibidos {lam.shape[0]}")
        if np.any(lam < 0):
            raise InvalidParameterError("los valores singulares deben ser no negativos")
    full = np.concatenate([lam, np.zeros(d_min - r)])
    return OdecoTensor.from_components(full, factors)


# ============ TUPLAS SINGULARES ============

def _normalize_signs(signs: Optional[np.ndarray], p: int, size: int) -> np.ndarray:
    if signs is None:
        free = np.ones((p - 1, size))
    else:
        free = np.asarray(signs, dtype=float)
    if free.shape not in ((p - 1, size), (p, size)):
        raise InvalidParameterError(f"signos con forma {free.shape}; se esperaba ({p - 1}, {size}) o ({p}, {size})")
    if not np.all(np.isin(free, (-1.0, 1.0))):
        raise InvalidParameterError("los signos deben ser +1 o -1")
    if free.shape[0] == p:
        if not np.all(np.prod(free, axis=0) == 1.0):
            raise InvalidParameterError("el producto de signos por componente debe ser +1")
        return free
    first = np.prod(free, axis=0, keepdims=True)
    return np.vstack([first, free])


def enumerate_tuples(
    t: OdecoTensor,
    active_set: Iterable[int],
    signs: Optional[np.ndarray] = None,
) -> SingularTuple:
    """
    Tupla singular cerrada para un subconjunto S de componentes positivas.

        lambda = (sum_{k in S} lambda_k^{-2/(p-2)})^{-(p-2)/2}
        v^(q)  = sum_{k in S} chi_k^(q) (lambda/lambda_k)^{1/(p-2)} u_k^(q)

    Args:
        t: tensor odeco de orden p >= 3
        active_set: índices (desde 0) de S
        signs: matriz (p-1) x |S| con los signos de los modos 2..p (el modo 1
            se fija con el producto), o p x |S| con producto +1 por columna.
            None equivale a todos +1.
    """
    p = t.order
    if p < 3:
        raise InvalidParameterError("las tuplas no esenciales requieren p >= 3")
    subset = tuple(sorted(int(k) for k in active_set))
    if not subset:
        raise InvalidParameterError("S no puede ser vacío")
    if len(set(subset)) != len(subset) or subset[0] < 0 or subset[-1] >= t.d_min:
        raise InvalidParameterError(f"S = {subset} no es un subconjunto válido de índices")
    lam_s = t.lambdas[list(subset)]
    if np.any(lam_s <= 0):
        raise InvalidParameterError("S contiene un valor singular nulo")
    chi = _normalize_signs(signs, p, len(subset))

    value = float(np.sum(lam_s ** (-2.0 / (p - 2))) ** (-(p - 2) / 2.0))
    weights = (value / lam_s) ** (1.0 / (p - 2))
    vectors = tuple(
        t.factors[q][:, list(subset)] @ (chi[q] * weights) for q in range(p)
    )
    return SingularTuple(value, vectors, subset, chi)


def all_tuples(t: OdecoTensor) -> Tuple[SingularTuple, ...]:
    """
    Todas las tuplas con lambda > 0: cada subconjunto no vacío del soporte
    positivo combinado con cada patrón de signos de los modos 2..p.
    Pensado para instancias pequeñas.
    """
    p = t.order
    support = [k for k in range(t.d_min) if t.lambdas[k] > 0]
    total = sum(
        2 ** ((p - 1) * size) * len(list(itertools.combinations(support, size)))
        for size in range(1, len(support) + 1)
    )
    if total > MAX_ENUMERATED:
        raise InvalidParameterError(f"demasiadas tuplas para enumerar ({total})")
    out = []
    for size in range(1, len(support) + 1):
        for subset in itertools.combinations(support, size):
            for pattern in itertools.product((1.0, -1.0), repeat=(p - 1) * size):
                signs = np.array(pattern).reshape(p - 1, size)
                out.append(enumerate_tuples(t, subset, signs))
    logger.debug("Enumeradas %d tuplas singulares", len(out))
    return tuple(out)


def tuple_residual(t: DenseTensor, tup: SingularTuple) -> float:
    """max_q || T x_{s != q} v^(s) - lambda v^(q) ||."""
    p = t.order
    worst = 0.0
    for q in range(p):
        others = [tup.vectors[s] for s in range(p) if s != q]
        res = contract_all_but(t, q, others) - tup.value * tup.vectors[q]
        worst = max(worst, float(np.linalg.norm(res)))
    return worst


def zero_tuple_check(t: OdecoTensor, x: Rank1Point) -> bool:
    """
    Verdadero si x es una tupla con lambda = 0: para cada k <= d_min al menos
    dos modos cumplen |<v^(q), u_k^(q)>| <= 1e-10. Relativo al completado
    ortonormal almacenado.
    """
    if x.dims != t.dims:
        raise DimensionMismatchError(f"el punto tiene dimensiones {x.dims}, el tensor {t.dims}")
    inner = np.stack([np.abs(t.factors[q].T @ x.factors[q]) for q in range(t.order)])
    zeros = np.sum(inner <= ZERO_INNER, axis=0)
    return bool(np.all(zeros >= 2))


# ============ EJEMPLOS CONOCIDOS ============

def weyl_pair() -> Tuple[OdecoTensor, OdecoTensor]:
    """
    T = 2 e1⊗e1⊗e1 y T~ = (e1+e2)^⊗3 + (e1-e2)^⊗3 = 2√2 (f1^⊗3 + f2^⊗3).

    Los valores difieren en 2√2 mientras que ||T - T~|| = 4/√3.
    """
    eye = np.eye(2)
    a = OdecoTensor(np.array([2.0, 0.0]), (eye, eye, eye))
    f = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
    b = OdecoTensor(np.full(2, 2.0 * np.sqrt(2.0)), (f, f, f))
    return a, b


def swapped_pair(delta: float) -> Tuple[OdecoTensor, OdecoTensor]:
    """(1+δ)e1^⊗3 + (1-δ)e2^⊗3 frente a la misma suma con los valores intercambiados."""
    if not 0 < delta < 1:
        raise InvalidParameterError("delta debe estar en (0, 1)")
    eye = np.eye(2)
    swap = eye[:, ::-1]
    lam = np.array([1.0 + delta, 1.0 - delta])
    return OdecoTensor(lam, (eye, eye, eye)), OdecoTensor(lam, (swap, swap, swap))


def orthogonal_counterexample(d: int, lam: float = 1.0) -> Tuple[OdecoTensor, OdecoTensor]:
    """
    T = λ sum_{i<d} e_i^⊗3 y T~ = λ sum_{i<d} (e_i + v) ⊗ e_i ⊗ e_i con
    v = e_d/√(d-1) - (e_1 + ... + e_{d-1})/(d-1). Ambos son odeco y
    ||Mat_1(T - T~)|| = √(d-1) ||T - T~||.
    """
    if d < 2:
        raise InvalidParameterError("d debe ser >= 2")
    eye = np.eye(d)
    v = -np.ones(d) / (d - 1)
    v[-1] = 1.0 / np.sqrt(d - 1)
    lambdas = np.concatenate([np.full(d - 1, float(lam)), [0.0]])
    shifted = orthonormal_completion(eye[:, : d - 1] + v[:, None], d)
    a = OdecoTensor(lambdas, (eye, eye, eye))
    b = OdecoTensor(lambdas, (shifted, eye, eye))
    return a, b


def matrix_gap_pair(delta: float) -> Tuple[np.ndarray, np.ndarray]:
    """diag(1+δ, 1-δ) y [[1, δ], [δ, 1]]: ||diferencia|| = √2 δ."""
    return np.diag([1.0 + delta, 1.0 - delta]), np.array([[1.0, delta], [delta, 1.0]])
