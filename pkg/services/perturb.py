"""
Perturbación de tensores odeco
Emparejamiento de tuplas con signos, constantes h_1..h_4 y c_eps, reportes de
cotas (valores, vectores, residuo de segundo orden) y tuplas no esenciales.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import optimize

from services.exceptions import ConstantsError, DimensionMismatchError, InvalidParameterError, ModeIndexError
from services.linalg import sin_angle, spectral_norm_2
from services.odeco import OdecoTensor, SingularTuple, to_dense, tuple_residual
from services.tensor_core import (
    DenseTensor,
    SpectralNormConfig,
    contract_all_but,
    spectral_norm_with,
    tensor_sub,
)

logger = logging.getLogger(__name__)

GENERAL_C = 17.0
BISECTION_HI = 1.0 - 1e-12
BRANCH_CEILING = 1e300
REPORT_COLUMNS = [
    "k", "lambda", "lambda_tilde", "gap", "max_sin", "sharp_flag", "bound_value",
    "bound_davis", "second_order_resid", "second_order_bound", "pass",
]

__all__ = [
    "sin_angle", "Matching", "match_tuples", "delta_norm", "PerturbConstants", "constants",
    "PerturbationRow", "PerturbationReport", "verify_bounds", "m_matrix",
    "NonessentialReport", "verify_nonessential", "ApproximationReport",
    "verify_approximation", "report_frame",
]


def _check_pair(a: OdecoTensor, b: OdecoTensor) -> None:
    if a.dims != b.dims:
        raise DimensionMismatchError(f"dimensiones distintas: {a.dims} y {b.dims}")


# ============ EMPAREJAMIENTO ============

@dataclass(frozen=True, eq=False)
class Matching:
    """
    pi[k] es el índice de b emparejado con la componente k de a.
    gamma[q, k] alinea el signo de u~_{pi(k)}^(q); prod_q gamma[:, k] = +1.
    """

    pi: np.ndarray
    gamma: np.ndarray
    score: float

    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.pi)
        inv[self.pi] = np.arange(self.pi.shape[0])
        return inv


def _max_sin(a: OdecoTensor, b: OdecoTensor, k: int, j: int) -> float:
    return max(sin_angle(a.factors[q][:, k], b.factors[q][:, j]) for q in range(a.order))


def match_tuples(a: OdecoTensor, b: OdecoTensor) -> Matching:
    """
    Emparejamiento voraz en orden de k:

        pi(k) = argmax_{j libre} lambda~_j prod_q |<u_k^(q), u~_j^(q)>|^{(p-2)/p}

    Si el funcional se anula o empata para algún k, se elige entre los
    candidatos el de menor max_q sin∠; los empates restantes van al índice
    más pequeño.
    """
    _check_pair(a, b)
    p = a.order
    d = a.d_min
    inner = np.stack([a.factors[q].T @ b.factors[q] for q in range(p)])
    functional = b.lambdas[None, :] * np.prod(np.abs(inner) ** ((p - 2) / p), axis=0)

    free = list(range(d))
    pi = np.empty(d, dtype=int)
    gamma = np.ones((p, d))
    score = 0.0
    for k in range(d):
        values = functional[k, free]
        top = float(np.max(values))
        if top > 0.0:
            tied = [j for j, v in zip(free, values) if v >= top * (1.0 - 1e-12)]
        else:
            tied = list(free)
        if len(tied) == 1:
            choice = tied[0]
        else:
            sines = [_max_sin(a, b, k, j) for j in tied]
            choice = tied[int(np.argmin(sines))]
            logger.debug("Componente %d: desempate por ángulo entre %s", k, tied)
        free.remove(choice)
        pi[k] = choice
        score += float(functional[k, choice])

        ips = inner[:, k, choice]
        signs = np.where(ips < 0, -1.0, 1.0)
        if np.prod(signs) < 0:
            flip = int(np.argmin(np.abs(ips)))
            signs[flip] = -signs[flip]
        gamma[:, k] = signs
    return Matching(pi, gamma, score)


def delta_norm(a: OdecoTensor, b: OdecoTensor, cfg: Optional[SpectralNormConfig] = None) -> float:
    """Estimación de ||T~ - T|| (cota inferior, ver spectral_norm)."""
    _check_pair(a, b)
    estimate, _ = spectral_norm_with(tensor_sub(to_dense(a), to_dense(b)), cfg or SpectralNormConfig())
    return estimate


# ============ CONSTANTES ============

def h1(x, p: int = 3):
    e = 2.0 / (p - 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        return 1.0 / (1.0 - (1.0 - (1.0 - x) ** e) ** ((p - 2) / 2.0))


def h2(x, p: int = 3):
    e = 2.0 / (p - 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = ((1.0 - x) / (1.0 + x)) ** e
        return 1.0 / (1.0 - (1.0 + x) * (1.0 - ratio) ** ((p - 2) / 2.0))


def h3(x, epsilon: float):
    return x * (1.0 + (1.0 + epsilon) * (1.0 + x))


def h4(x, epsilon: float, p: int = 3):
    e = 2.0 / (p - 2)
    ratio = ((1.0 - x) / (1.0 + x)) ** e
    return (1.0 + x) * (1.0 - ratio) ** ((p - 2) / 2.0) + (1.0 + epsilon) * x * (1.0 + x)


def _branch(fn):
    """
    Rama creciente en (0, 1): valores negativos o no finitos se vuelven +inf.
    x entra como arreglo para que los polos den inf y no ZeroDivisionError.
    """
    def wrapped(x):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            value = np.asarray(fn(np.asarray(x, dtype=float)), dtype=float)
        return np.where(np.isfinite(value) & (value >= 0.0), value, BRANCH_CEILING)
    return wrapped


def _invert(fn, target: float, name: str) -> float:
    branch = _branch(fn)

    def residual(x):
        return float(branch(x)) - target

    lo, hi = 0.0, BISECTION_HI
    if not (residual(lo) < 0.0 < residual(hi)):
        raise ConstantsError(f"{name}: el objetivo {target} no queda encerrado en (0, 1)")
    root = optimize.bisect(residual, lo, hi, xtol=1e-15, maxiter=400)
    if abs(residual(root)) > 1e-9 * max(1.0, abs(target)):
        raise ConstantsError(f"{name}: la bisección no reproduce el objetivo ({residual(root):.3g})")
    grid = branch(np.linspace(0.0, root, 33))
    if np.any(np.diff(grid) < -1e-12 * np.max(np.abs(grid))):
        raise ConstantsError(f"{name}: la rama no es monótona en (0, {root})")
    return float(root)


@dataclass(frozen=True)
class PerturbConstants:
    epsilon: float
    p: int
    c_epsilon: float
    objective: float
    h1_inv: float
    h2_inv: float
    h3_inv: float
    h4_inv: float
    binding: str


def constants(epsilon: float, p: int = 3) -> PerturbConstants:
    """
    c_eps = min{(1+eps)^-1, h1^-1(1+eps), h2^-1(1+eps), h3^-1(1), h4^-1(eps/(1+eps))}
    y el objetivo max{1+eps, 1/c_eps}. Por defecto p = 3, que sirve para todo p >= 3.
    """
    if not epsilon > 0:
        raise InvalidParameterError("epsilon debe ser > 0")
    if p < 3:
        raise InvalidParameterError("las constantes requieren p >= 3")
    candidates = {
        "inverse": 1.0 / (1.0 + epsilon),
        "h1": _invert(lambda x: h1(x, p), 1.0 + epsilon, "h1"),
        "h2": _invert(lambda x: h2(x, p), 1.0 + epsilon, "h2"),
        "h3": _invert(lambda x: h3(x, epsilon), 1.0, "h3"),
        "h4": _invert(lambda x: h4(x, epsilon, p), epsilon / (1.0 + epsilon), "h4"),
    }
    binding = min(candidates, key=candidates.get)
    c_eps = candidates[binding]
    return PerturbConstants(
        epsilon=float(epsilon),
        p=p,
        c_epsilon=c_eps,
        objective=max(1.0 + epsilon, 1.0 / c_eps),
        h1_inv=candidates["h1"],
        h2_inv=candidates["h2"],
        h3_inv=candidates["h3"],
        h4_inv=candidates["h4"],
        binding=binding,
    )


# ============ REPORTE DE COTAS ============

@dataclass(frozen=True)
class PerturbationRow:
    k: int
    lam: float
    lam_tilde: float
    gap: float
    max_sin: float
    sharp: bool
    bound_value: float
    bound_davis: float
    second_order_resid: float
    second_order_bound: float
    passed: bool
    naive_weyl: bool

    def as_record(self) -> dict:
        return dict(zip(REPORT_COLUMNS, [
            self.k, self.lam, self.lam_tilde, self.gap, self.max_sin, self.sharp,
            self.bound_value, self.bound_davis, self.second_order_resid,
            self.second_order_bound, self.passed,
        ]))


@dataclass(frozen=True, eq=False)
class PerturbationReport:
    """
    Filas por componente con un único Δ estimado. Δ es una cota inferior,
    así que una violación puede deberse a subestimar la norma.
    """

    rows: Tuple[PerturbationRow, ...]
    delta: float
    epsilon: float
    c_epsilon: float
    matching: Matching
    delta_is_estimate: bool = True

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    @property
    def violations(self) -> List[int]:
        return [row.k for row in self.rows if not row.passed]

    @property
    def naive_weyl_holds(self) -> bool:
        return all(row.naive_weyl for row in self.rows)

    @property
    def max_gap(self) -> float:
        return max(row.gap for row in self.rows)


def _angle_denominator(t: OdecoTensor, k: int) -> float:
    """
    lambda_k, o lambda_{d_min-1} para un último cero simple; 0 si no hay cota.
    El último cero sólo identifica su vector cuando todos los modos miden d_min.
    """
    lambdas = t.lambdas
    if lambdas[k] > 0:
        return float(lambdas[k])
    d = lambdas.shape[0]
    square = all(dim == d for dim in t.dims)
    if square and k == d - 1 and d >= 2 and lambdas[d - 2] > 0:
        return float(lambdas[d - 2])
    return 0.0


def _second_order(a: OdecoTensor, b: OdecoTensor, diff: DenseTensor, k: int, j: int) -> float:
    p = a.order
    worst = 0.0
    for q in range(p):
        others = [a.factors[s][:, k] for s in range(p) if s != q]
        target = a.factors[q][:, k] + contract_all_but(diff, q, others) / a.lambdas[k]
        worst = max(worst, sin_angle(b.factors[q][:, j], target))
    return worst


def verify_bounds(
    a: OdecoTensor,
    b: OdecoTensor,
    epsilon: float = 0.05,
    cfg: Optional[SpectralNormConfig] = None,
    delta: Optional[float] = None,
    atol: float = 1e-8,
    atol_second: float = 1e-12,
) -> PerturbationReport:
    """
    Contrasta T (a) y T~ (b) con las cotas de perturbación.

    Régimen agudo (Δ <= c_eps lambda_k): |lambda_k - lambda~_pi(k)| <= Δ,
    max_q sin∠ <= (1+eps)Δ/lambda_k y el residuo de segundo orden
    sin∠(u~_pi(k)^(q), u_k^(q) + (T~-T) x_{s!=q} u_k^(s) / lambda_k) <=
    (2 + Δ/lambda_k)((1+eps)Δ/lambda_k)^{p-1}.
    En otro caso se usan las cotas con C = 17. Filas con lambda_k = 0 no
    tienen cota angular (+inf) salvo un último cero simple.

    Args:
        delta: Δ ya estimado; si es None se estima con cfg
    """
    _check_pair(a, b)
    consts = constants(epsilon)
    diff = tensor_sub(to_dense(b), to_dense(a))
    if delta is None:
        delta, _ = spectral_norm_with(diff, cfg or SpectralNormConfig())
    matching = match_tuples(a, b)
    p = a.order
    rows = []
    for k in range(a.d_min):
        j = int(matching.pi[k])
        lam = float(a.lambdas[k])
        lam_t = float(b.lambdas[j])
        gap = abs(lam - lam_t)
        max_sin = _max_sin(a, b, k, j)
        sharp = lam > 0 and delta <= consts.c_epsilon * lam
        resid = _second_order(a, b, diff, k, j) if lam > 0 else float("nan")
        if sharp:
            bound_value = delta
            bound_davis = (1.0 + epsilon) * delta / lam
            bound_second = (2.0 + delta / lam) * ((1.0 + epsilon) * delta / lam) ** (p - 1)
            passed = (
                gap <= bound_value + atol
                and max_sin <= bound_davis + atol
                and resid <= bound_second + atol_second
            )
        else:
            denom = _angle_denominator(a, k)
            bound_value = GENERAL_C * delta
            bound_davis = GENERAL_C * delta / denom if denom > 0 else float("inf")
            bound_second = float("inf")
            passed = gap <= bound_value + atol and max_sin <= bound_davis + atol
        rows.append(PerturbationRow(
            k=k, lam=lam, lam_tilde=lam_t, gap=gap, max_sin=max_sin, sharp=sharp,
            bound_value=bound_value, bound_davis=bound_davis, second_order_resid=resid,
            second_order_bound=bound_second, passed=passed, naive_weyl=gap <= delta + atol,
        ))
    report = PerturbationReport(tuple(rows), float(delta), float(epsilon), consts.c_epsilon, matching)
    if not report.passed:
        logger.warning("Cotas violadas en k = %s con Δ = %.6g", report.violations, delta)
    return report


def report_frame(report) -> pd.DataFrame:
    """Filas del reporte como DataFrame en el orden de columnas del CSV."""
    return pd.DataFrame([row.as_record() for row in report.rows], columns=REPORT_COLUMNS)


# ============ TUPLAS NO ESENCIALES ============

def m_matrix(a: OdecoTensor, delta_dense: DenseTensor, q: int) -> np.ndarray:
    """M^(q): columna k = (T~ - T) x_{s != q} u_k^(s) para las r componentes positivas."""
    if not 0 <= q < a.order:
        raise ModeIndexError(f"modo {q} fuera de rango para orden {a.order}")
    if delta_dense.dims != a.dims:
        raise DimensionMismatchError(f"dimensiones distintas: {a.dims} y {delta_dense.dims}")
    r = a.rank
    cols = [
        contract_all_but(delta_dense, q, [a.factors[s][:, k] for s in range(a.order) if s != q])
        for k in range(r)
    ]
    return np.column_stack(cols) if cols else np.zeros((a.dims[q], 0))


@dataclass(frozen=True, eq=False)
class NonessentialReport:
    delta: float
    c1: float
    c2: float
    transportable: bool
    transported: Optional[SingularTuple]
    vector_distance: float
    value_gap: float
    lambda_star_min: float
    reference_vector: float
    reference_value: float
    residual: float = float("nan")
    notes: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def vector_ratio(self) -> float:
        if self.reference_vector == 0 or not np.isfinite(self.reference_vector):
            return float("nan")
        return self.vector_distance / self.reference_vector

    @property
    def value_ratio(self) -> float:
        if self.reference_value == 0 or not np.isfinite(self.reference_value):
            return float("nan")
        return self.value_gap / self.reference_value


def verify_nonessential(
    a: OdecoTensor,
    b: OdecoTensor,
    tuple_a: SingularTuple,
    cfg: Optional[SpectralNormConfig] = None,
    delta: Optional[float] = None,
) -> NonessentialReport:
    """
    Transporta una tupla de a a b: S~ = pi(S), signos chi_k^(q) gamma_k^(q) y

        v~^(q) = sum_{k in S} chi_k^(q) gamma_k^(q) (lambda~/lambda~_pi(k))^{1/(p-2)} u~_pi(k)^(q)

    Informa C1 = max_q ||M^(q)|| / Δ, C2 = Δ / (lambda_r r^{-1/(2(p-2))}),
    max_q ||v^(q) - v~^(q)||, |lambda - lambda~| y las referencias Δ/lambda*_min
    y lambda Δ/lambda*_min. No se afirma ninguna constante.
    """
    _check_pair(a, b)
    p = a.order
    if p < 3:
        raise InvalidParameterError("las tuplas no esenciales requieren p >= 3")
    if tuple_a.active_set is None:
        raise InvalidParameterError("la tupla necesita su conjunto activo")

    diff = tensor_sub(to_dense(b), to_dense(a))
    if delta is None:
        delta, _ = spectral_norm_with(diff, cfg or SpectralNormConfig())
    r = a.rank
    m_norms = [spectral_norm_2(m_matrix(a, diff, q)) for q in range(p)]
    c1 = max(m_norms) / delta if delta > 0 else 0.0
    c2 = delta / (a.lambdas[r - 1] * r ** (-1.0 / (2 * (p - 2)))) if r > 0 else float("inf")

    subset = tuple(tuple_a.active_set)
    if not subset:
        return NonessentialReport(
            delta, c1, c2, False, None, float("nan"), float("nan"), 0.0,
            float("inf"), float("inf"), notes=("S vacío: lambda*_min = 0",),
        )

    matching = match_tuples(a, b)
    targets = [int(matching.pi[k]) for k in subset]
    lam_star = float(np.min(a.lambdas[list(subset)]))
    ref_vector = delta / lam_star
    ref_value = tuple_a.value * delta / lam_star
    lam_t = b.lambdas[targets]
    if np.any(lam_t <= 0):
        logger.info("Conjunto activo no transportable: %s -> %s", subset, targets)
        return NonessentialReport(
            delta, c1, c2, False, None, float("nan"), float("nan"), lam_star,
            ref_vector, ref_value, notes=("algún lambda~ emparejado es 0",),
        )

    chi = tuple_a.signs if tuple_a.signs is not None else np.ones((p, len(subset)))
    signs = chi * matching.gamma[:, list(subset)]
    value = float(np.sum(lam_t ** (-2.0 / (p - 2))) ** (-(p - 2) / 2.0))
    weights = (value / lam_t) ** (1.0 / (p - 2))
    vectors = tuple(b.factors[q][:, targets] @ (signs[q] * weights) for q in range(p))
    transported = SingularTuple(value, vectors, tuple(targets), signs)

    distance = max(float(np.linalg.norm(tuple_a.vectors[q] - vectors[q])) for q in range(p))
    residual = tuple_residual(to_dense(b), transported)
    return NonessentialReport(
        delta=float(delta), c1=c1, c2=c2, transportable=True, transported=transported,
        vector_distance=distance, value_gap=abs(tuple_a.value - value),
        lambda_star_min=lam_star, reference_vector=ref_vector, reference_value=ref_value,
        residual=residual,
    )


# ============ APROXIMACIÓN ODECO DE UN TENSOR RUIDOSO ============

@dataclass(frozen=True, eq=False)
class ApproximationReport:
    """Cotas para una aproximación odeco T~ de X = T + E."""

    rows: Tuple[PerturbationRow, ...]
    noise_norm: float
    fit_norm: float
    matching: Matching

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)


def verify_approximation(
    truth: OdecoTensor,
    approx: OdecoTensor,
    observed: DenseTensor,
    cfg: Optional[SpectralNormConfig] = None,
    atol: float = 1e-8,
) -> ApproximationReport:
    """
    |lambda_k - lambda~_pi(k)| <= C(||T~ - X|| + ||E||) y
    max_q sin∠ <= C(||T~ - X|| + ||E||)/lambda_k con C = 17 y E = X - T.
    """
    _check_pair(truth, approx)
    if observed.dims != truth.dims:
        raise DimensionMismatchError(f"dimensiones distintas: {truth.dims} y {observed.dims}")
    cfg = cfg or SpectralNormConfig()
    noise, _ = spectral_norm_with(tensor_sub(observed, to_dense(truth)), cfg)
    fit, _ = spectral_norm_with(tensor_sub(to_dense(approx), observed), cfg)
    scale = noise + fit
    matching = match_tuples(truth, approx)
    rows = []
    for k in range(truth.d_min):
        j = int(matching.pi[k])
        lam = float(truth.lambdas[k])
        gap = abs(lam - float(approx.lambdas[j]))
        max_sin = _max_sin(truth, approx, k, j)
        denom = _angle_denominator(truth, k)
        bound_davis = GENERAL_C * scale / denom if denom > 0 else float("inf")
        rows.append(PerturbationRow(
            k=k, lam=lam, lam_tilde=float(approx.lambdas[j]), gap=gap, max_sin=max_sin,
            sharp=False, bound_value=GENERAL_C * scale, bound_davis=bound_davis,
            second_order_resid=float("nan"), second_order_bound=float("inf"),
            passed=gap <= GENERAL_C * scale + atol and max_sin <= bound_davis + atol,
            naive_weyl=gap <= scale + atol,
        ))
    return ApproximationReport(tuple(rows), noise, fit, matching)
