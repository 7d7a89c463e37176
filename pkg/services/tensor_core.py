"""
Núcleo tensorial
Almacenamiento denso de orden p y primitivas multilineales: contracciones,
matricización, producto de Khatri-Rao y estimación de la norma espectral.

Convenciones:
    - Los modos se indexan desde 0 en la API de Python.
    - Los valores se guardan en orden fila (el último índice varía más rápido).
    - matricize(t, q) mueve el modo q al frente y aplana en orden C, así las
      columnas recorren los modos restantes en orden ascendente,
      lexicográficamente, con el último modo más rápido.
"""
import logging
import string
from dataclasses import asdict, dataclass
from functools import reduce
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from services.exceptions import (
    DegeneratePointError,
    DimensionMismatchError,
    InvalidParameterError,
    ModeIndexError,
    TensorFormatError,
)

logger = logging.getLogger(__name__)

DEGENERATE_NORM = 1e-300
MAX_REDRAWS = 20


# ============ TIPOS ============

@dataclass(frozen=True, eq=False)
class DenseTensor:
    """Tensor real denso de orden p >= 2 con entradas finitas."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float, copy=True)
        if arr.ndim < 2:
            raise InvalidParameterError(f"el orden debe ser >= 2, recibido {arr.ndim}")
        if arr.size == 0:
            raise InvalidParameterError("todas las dimensiones deben ser positivas")
        if not np.all(np.isfinite(arr)):
            raise TensorFormatError("el tensor contiene valores no finitos")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_flat(cls, dims: Sequence[int], flat: Iterable[float]) -> "DenseTensor":
        """Construye el tensor desde valores en orden fila."""
        dims = tuple(int(d) for d in dims)
        flat = np.asarray(list(flat) if not isinstance(flat, np.ndarray) else flat, dtype=float)
        if any(d <= 0 for d in dims):
            raise InvalidParameterError(f"dimensiones inválidas: {dims}")
        if flat.size != int(np.prod(dims)):
            raise DimensionMismatchError(
                f"se esperaban {int(np.prod(dims))} valores para {dims}, recibidos {flat.size}"
            )
        return cls(flat.reshape(dims))

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> "DenseTensor":
        return cls(np.zeros(tuple(dims)))

    @property
    def order(self) -> int:
        return self.values.ndim

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)

    def flat(self) -> np.ndarray:
        return self.values.ravel()


@dataclass(frozen=True, eq=False)
class Rank1Point:
    """Punto (a^(1), ..., a^(p)) del producto de esferas."""

    factors: Tuple[np.ndarray, ...]

    def __post_init__(self):
        factors = tuple(np.array(f, dtype=float, copy=True).ravel() for f in self.factors)
        for q, f in enumerate(factors):
            if abs(np.linalg.norm(f) - 1.0) > 1e-12:
                raise InvalidParameterError(f"el factor del modo {q} no es unitario")
            f.setflags(write=False)
        object.__setattr__(self, "factors", factors)

    @classmethod
    def normalized(cls, vectors: Sequence[np.ndarray]) -> "Rank1Point":
        """Normaliza cada vector; falla si alguno es (casi) cero."""
        out = []
        for q, v in enumerate(vectors):
            v = np.asarray(v, dtype=float).ravel()
            norm = np.linalg.norm(v)
            if norm <= DEGENERATE_NORM:
                raise InvalidParameterError(f"el vector del modo {q} es nulo")
            out.append(v / norm)
        return cls(tuple(out))

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)


@dataclass(frozen=True)
class SpectralNormConfig:
    """Parámetros de la estimación multi-arranque de la norma espectral."""

    restarts: int = 1000
    tol: float = 1e-10
    max_iter: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1:
            raise InvalidParameterError("restarts debe ser >= 1")
        if self.tol <= 0:
            raise InvalidParameterError("tol debe ser > 0")
        if self.max_iter < 1:
            raise InvalidParameterError("max_iter debe ser >= 1")

    def scaled(self, factor: int) -> "SpectralNormConfig":
        """Misma configuración con factor veces más arranques."""
        params = asdict(self)
        params["restarts"] = self.restarts * factor
        return SpectralNormConfig(**params)


# ============ VALIDACIONES ============

def _check_mode(t: DenseTensor, q: int) -> None:
    if not 0 <= q < t.order:
        raise ModeIndexError(f"modo {q} fuera de rango para orden {t.order}")


def _check_same_dims(t: DenseTensor, u: DenseTensor) -> None:
    if t.dims != u.dims:
        raise DimensionMismatchError(f"dimensiones distintas: {t.dims} y {u.dims}")


# ============ CONTRACCIONES ============

def contract_all_but(t: DenseTensor, q: int, vectors: Sequence[np.ndarray]) -> np.ndarray:
    """
    Contracción T x_{s != q} v^(s); devuelve un vector de longitud d_q.

    Args:
        t: tensor denso
        q: modo libre (desde 0)
        vectors: p - 1 vectores para los modos distintos de q, en orden ascendente
    """
    _check_mode(t, q)
    others = [s for s in range(t.order) if s != q]
    if len(vectors) != len(others):
        raise DimensionMismatchError(f"se esperaban {len(others)} vectores, recibidos {len(vectors)}")
    vecs = [np.asarray(v, dtype=float).ravel() for v in vectors]
    for s, v in zip(others, vecs):
        if v.shape[0] != t.dims[s]:
            raise DimensionMismatchError(f"el vector del modo {s} mide {v.shape[0]}, se esperaba {t.dims[s]}")
    res = t.values
    # del eje mayor al menor para no desplazar los índices pendientes
    for s, v in sorted(zip(others, vecs), key=lambda pair: -pair[0]):
        res = np.tensordot(res, v, axes=([s], [0]))
    return np.asarray(res, dtype=float)


def rank1_value(t: DenseTensor, x: Rank1Point) -> float:
    """<T, a^(1) ⊗ ... ⊗ a^(p)> con signo."""
    if x.dims != t.dims:
        raise DimensionMismatchError(f"el punto tiene dimensiones {x.dims}, el tensor {t.dims}")
    res = t.values
    for s in reversed(range(t.order)):
        res = np.tensordot(res, x.factors[s], axes=([s], [0]))
    return float(res)


def outer(vectors: Sequence[np.ndarray]) -> DenseTensor:
    """Tensor de rango uno a^(1) ⊗ ... ⊗ a^(p)."""
    if len(vectors) < 2:
        raise InvalidParameterError("outer requiere al menos dos vectores")
    vecs = [np.asarray(v, dtype=float).ravel() for v in vectors]
    return DenseTensor(reduce(np.multiply.outer, vecs))


def frobenius_norm(t: DenseTensor) -> float:
    return float(np.linalg.norm(t.values.ravel()))


# ============ MATRICIZACIÓN ============

def matricize(t: DenseTensor, q: int) -> np.ndarray:
    """Mat_q(T): matriz d_q x prod_{s != q} d_s con la convención del módulo."""
    _check_mode(t, q)
    return np.moveaxis(t.values, q, 0).reshape(t.dims[q], -1).copy()


def dematricize(m: np.ndarray, q: int, dims: Sequence[int]) -> DenseTensor:
    """Inversa exacta de matricize."""
    dims = tuple(int(d) for d in dims)
    if not 0 <= q < len(dims):
        raise ModeIndexError(f"modo {q} fuera de rango para orden {len(dims)}")
    m = np.asarray(m, dtype=float)
    rest = tuple(d for s, d in enumerate(dims) if s != q)
    if m.shape != (dims[q], int(np.prod(rest))):
        raise DimensionMismatchError(f"matriz de forma {m.shape} incompatible con {dims} en el modo {q}")
    return DenseTensor(np.moveaxis(m.reshape((dims[q],) + rest), 0, q))


def khatri_rao(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Producto de Khatri-Rao: la columna j es el Kronecker de las columnas j."""
    if len(mats) == 0:
        raise InvalidParameterError("khatri_rao requiere al menos una matriz")
    mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in mats]
    r = mats[0].shape[1]
    if any(m.shape[1] != r for m in mats):
        raise DimensionMismatchError("todas las matrices deben tener el mismo número de columnas")
    out = mats[0]
    for m in mats[1:]:
        out = (out[:, None, :] * m[None, :, :]).reshape(-1, r)
    return out


# ============ ARITMÉTICA ============

def tensor_add(t: DenseTensor, u: DenseTensor) -> DenseTensor:
    _check_same_dims(t, u)
    return DenseTensor(t.values + u.values)


def tensor_sub(t: DenseTensor, u: DenseTensor) -> DenseTensor:
    _check_same_dims(t, u)
    return DenseTensor(t.values - u.values)


def tensor_scale(t: DenseTensor, c: float) -> DenseTensor:
    return DenseTensor(float(c) * t.values)


# ============ NORMA ESPECTRAL ============

def random_rank1_point(dims: Sequence[int], rng: np.random.Generator) -> Rank1Point:
    """Factores uniformes en cada esfera (normales estándar normalizadas)."""
    while True:
        vecs = [rng.standard_normal(int(d)) for d in dims]
        if all(np.linalg.norm(v) > DEGENERATE_NORM for v in vecs):
            return Rank1Point.normalized(vecs)


def _batch_subscripts(order: int) -> Tuple[str, List[str]]:
    letters = string.ascii_lowercase[:order]
    return letters, [f"z{letters[s]}" for s in range(order)]


def _batch_contract(values: np.ndarray, factors: List[np.ndarray], q: int) -> np.ndarray:
    """Contracción por lotes en todos los modos salvo q; devuelve (B, d_q)."""
    letters, vec_subs = _batch_subscripts(values.ndim)
    others = [s for s in range(values.ndim) if s != q]
    subscripts = ",".join([letters] + [vec_subs[s] for s in others]) + f"->z{letters[q]}"
    return np.einsum(subscripts, values, *[factors[s] for s in others], optimize="greedy")


def _batch_value(values: np.ndarray, factors: List[np.ndarray]) -> np.ndarray:
    return np.einsum("zi,zi->z", _batch_contract(values, factors, 0), factors[0])


def _pair_sines(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """sin∠ fila a fila entre dos lotes de vectores unitarios."""
    return np.linalg.norm(a - b, axis=1) * np.linalg.norm(a + b, axis=1) / 2.0


def spectral_norm(
    t: DenseTensor,
    restarts: int = 1000,
    tol: float = 1e-10,
    max_iter: int = 500,
    seed: int = 0,
) -> Tuple[float, Rank1Point]:
    """
    Estima ||T|| = max |<T, a^(1) ⊗ ... ⊗ a^(p)>| sobre vectores unitarios.

    Cada arranque itera la contracción normalizada modo a modo (cada modo usa
    los factores más recientes de los demás) hasta que el cambio de ángulo
    entre iteraciones sucesivas sea < tol o se agote max_iter. El resultado
    es siempre una cota inferior de la norma real.

    Cada arranque usa su propio generador derivado de (seed, índice), así
    el resultado no depende del orden de ejecución.

    Returns:
        (estimación, punto donde se alcanza); la estimación nunca supera ||T||

    Raises:
        DegeneratePointError: si todos los arranques degeneraron más de
            MAX_REDRAWS veces
    """
    SpectralNormConfig(restarts=restarts, tol=tol, max_iter=max_iter, seed=seed)
    dims = t.dims
    p = t.order

    if frobenius_norm(t) == 0.0:
        rng = np.random.default_rng([seed, 0])
        return 0.0, random_rank1_point(dims, rng)

    rngs = [np.random.default_rng([seed, trial]) for trial in range(restarts)]
    factors = [np.empty((restarts, d)) for d in dims]

    def draw(trial: int) -> None:
        point = random_rank1_point(dims, rngs[trial])
        for s in range(p):
            factors[s][trial] = point.factors[s]

    for trial in range(restarts):
        draw(trial)

    active = np.arange(restarts)
    redraws = np.zeros(restarts, dtype=int)
    dead = np.zeros(restarts, dtype=bool)
    iterations = 0

    while active.size and iterations < max_iter:
        iterations += 1
        batch = [f[active] for f in factors]
        previous = [b.copy() for b in batch]
        degenerate = np.zeros(active.size, dtype=bool)
        for q in range(p):
            g = _batch_contract(t.values, batch, q)
            norms = np.linalg.norm(g, axis=1)
            bad = norms <= DEGENERATE_NORM
            degenerate |= bad
            norms[bad] = 1.0
            batch[q] = g / norms[:, None]
        change = np.max(np.stack([_pair_sines(batch[q], previous[q]) for q in range(p)]), axis=0)

        for s in range(p):
            factors[s][active] = batch[s]

        for trial in active[degenerate]:
            redraws[trial] += 1
            if redraws[trial] > MAX_REDRAWS:
                dead[trial] = True
            else:
                logger.debug("Arranque %d degenerado, se vuelve a sortear", trial)
                draw(trial)

        done = (change < tol) & ~degenerate
        active = active[~done & ~dead[active]]

    if np.all(dead):
        raise DegeneratePointError(
            f"los {restarts} arranques degeneraron más de {MAX_REDRAWS} veces; sin punto válido"
        )
    values = np.abs(_batch_value(t.values, factors))
    values[dead] = -np.inf
    best = int(np.argmax(values))
    point = Rank1Point.normalized([f[best] for f in factors])
    estimate = abs(rank1_value(t, point))
    logger.debug(
        "Norma espectral estimada %.12g (%d arranques, %d iteraciones, %d sin converger)",
        estimate, restarts, iterations, active.size,
    )
    return estimate, point


def spectral_norm_with(t: DenseTensor, cfg: SpectralNormConfig) -> Tuple[float, Rank1Point]:
    """Atajo para llamar a spectral_norm con un SpectralNormConfig."""
    return spectral_norm(t, **asdict(cfg))
