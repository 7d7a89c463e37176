"""
Experimentos reproducibles
Pares odeco correlacionados, modelo X = T + E, contraejemplos conocidos,
tasas del SVD tensorial, tabla de constantes y ensambles de verificación.
Todo es determinista dado (semilla, configuración).
"""
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import ndimage, optimize

from services.decompose import IterationConfig, decompose_odeco, find_tuple, hosvd, refine
from services.exceptions import DegeneratePointError, InvalidParameterError
from services.incoherent import polar_factor, random_incoherent, verify_projection
from services.linalg import dense_svd, principal_sines, sin_angle, spectral_norm_2
from services.odeco import (
    OdecoTensor,
    all_tuples,
    matrix_gap_pair,
    orthogonal_counterexample,
    random_odeco,
    swapped_pair,
    to_dense,
    tuple_residual,
    weyl_pair,
)
from services.perturb import PerturbationReport, constants, delta_norm, match_tuples, verify_bounds
from services.tensor_core import (
    DenseTensor,
    SpectralNormConfig,
    matricize,
    random_rank1_point,
    spectral_norm_with,
    tensor_add,
    tensor_sub,
)

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20240601
RETRY_FACTOR = 10
TIGHT_REGIME = 0.05
TIGHT_SLACK = 0.02
ENSEMBLE_KINDS = ("sharp", "roundtrip", "incoherent", "attraction", "nonessential")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Parámetros comunes de los experimentos.

    rho_scale fija rho = rho_scale / lambda; noise_sd es la desviación de E.
    grid_points sólo aplica a la malla reducida (full=False).
    """

    experiment: str = "figure1"
    d: int = 20
    r: int = 10
    p: int = 3
    full: bool = False
    grid_points: int = 20
    rho_scale: float = 15.0
    noise_sd: float = 1.0
    seed: int = DEFAULT_SEED
    epsilon: float = 0.05
    spectral: SpectralNormConfig = field(default_factory=lambda: SpectralNormConfig(restarts=200))
    iteration: IterationConfig = field(default_factory=IterationConfig)
    output: Optional[str] = None

    def __post_init__(self):
        if self.seed is None:
            raise InvalidParameterError("la semilla es obligatoria")
        if self.p < 3:
            raise InvalidParameterError("los experimentos usan p >= 3")
        if not 1 <= self.r <= self.d:
            raise InvalidParameterError(f"r = {self.r} debe estar entre 1 y d = {self.d}")
        if not self.full and self.grid_points < 2:
            raise InvalidParameterError("la malla necesita al menos dos puntos")

    def spectral_for(self, *keys: int) -> SpectralNormConfig:
        """Configuración de norma espectral con semilla derivada de (seed, keys)."""
        derived = int(np.random.default_rng([self.seed, *keys]).integers(0, 2**31 - 1))
        return replace(self.spectral, seed=derived)

    def metadata(self) -> Dict[str, object]:
        meta = {
            "experiment": self.experiment, "d": self.d, "r": self.r, "p": self.p,
            "full": self.full, "grid_points": self.grid_points, "rho_scale": self.rho_scale,
            "noise_sd": self.noise_sd, "seed": self.seed, "epsilon": self.epsilon,
        }
        meta.update({f"spectral_{k}": v for k, v in asdict(self.spectral).items()})
        meta.update({f"iteration_{k}": v for k, v in asdict(self.iteration).items()})
        return meta


@dataclass(frozen=True)
class Check:
    """Comprobación con valor observado, esperado y tolerancia."""

    name: str
    observed: float
    expected: float
    tol: float
    passed: bool
    detail: str = ""


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    name: str
    frame: pd.DataFrame
    checks: Tuple[Check, ...]
    metadata: Dict[str, object]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[Check]:
        return [c for c in self.checks if not c.passed]


def _close(name: str, observed: float, expected: float, tol: float, detail: str = "") -> Check:
    return Check(name, float(observed), float(expected), tol, bool(abs(observed - expected) <= tol), detail)


def omega_grid(full: bool = False, points: int = 20) -> np.ndarray:
    """
    {1000/i : i = 1..199} ∪ {5} completo (200 valores) o una submalla con
    i equiespaciados en [1, 199] más el 5 final.
    """
    if full:
        idx = np.arange(1, 200)
    else:
        if points < 2:
            raise InvalidParameterError("la malla necesita al menos dos puntos")
        idx = np.unique(np.rint(np.linspace(1, 199, points - 1)).astype(int))
    return np.concatenate([1000.0 / idx, [5.0]])


def _max_matched_sin(a: OdecoTensor, b: OdecoTensor, r: int) -> float:
    matching = match_tuples(a, b)
    return max(
        sin_angle(a.factors[q][:, k], b.factors[q][:, int(matching.pi[k])])
        for k in range(r) for q in range(a.order)
    )


# ============ PARES CORRELACIONADOS ============

def correlated_pair(d: int, r: int, lam: float, rho: float, rng: np.random.Generator, p: int = 3):
    """
    U, Ū ortonormales d x r independientes; Û = √(1-ρ²) U + ρ Ū y Ũ su
    factor polar. Devuelve (T, T~) con todos los valores iguales a lam.
    """
    if not 0.0 <= rho < 1.0:
        raise InvalidParameterError(f"rho = {rho} debe estar en [0, 1)")
    base, moved = [], []
    for _ in range(p):
        u, _ = np.linalg.qr(rng.standard_normal((d, r)))
        u_bar, _ = np.linalg.qr(rng.standard_normal((d, r)))
        base.append(u)
        moved.append(polar_factor(np.sqrt(1.0 - rho**2) * u + rho * u_bar))
    lambdas = np.full(r, float(lam))
    return OdecoTensor.from_components(lambdas, base), OdecoTensor.from_components(lambdas, moved)


def ratio_floor(p: int) -> float:
    """
    Menor y/x posible a primer orden: si los p modos de una componente se
    mueven lo mismo (seno s), ||T~ - T||/lambda = √p ((p-1)/p)^{(p-1)/2} s.
    Para p = 3 vale √3/2.
    """
    return 1.0 / (np.sqrt(p) * ((p - 1) / p) ** ((p - 1) / 2.0))


def tight_check(frame: pd.DataFrame, p: int) -> Check:
    """Filas con x < 0.05: y/x no baja del piso de primer orden (holgura TIGHT_SLACK)."""
    small = frame[frame["delta_over_lambda"] < TIGHT_REGIME]
    floor = ratio_floor(p)
    lowest = float(small["ratio"].min()) if len(small) else floor
    return Check("figure1_tight", lowest, floor, TIGHT_SLACK, bool(lowest >= floor - TIGHT_SLACK),
                 f"min y/x en {len(small)} filas con x < {TIGHT_REGIME}")


def figure1(cfg: ExperimentConfig) -> ExperimentResult:
    """
    Por cada omega: lambda = omega d^{3/4}, rho = rho_scale/lambda,
    x = ||T~ - T||/lambda e y = max_{k<r, q} sin∠(u_k^(q), u~_pi(k)^(q)).
    Si y > x se reestima la norma con 10 veces más arranques.
    Comprueba y <= x en todas las filas y, para x < 0.05, que y/x no baje
    de ratio_floor(p) (√3/2 en p = 3) más que TIGHT_SLACK. La fracción con
    y/x >= 0.9 queda en los metadatos.
    """
    omegas = omega_grid(cfg.full, cfg.grid_points)
    rows = []
    for i, omega in enumerate(omegas):
        lam = omega * cfg.d ** 0.75
        rho = cfg.rho_scale / lam
        rng = np.random.default_rng([cfg.seed, i])
        a, b = correlated_pair(cfg.d, cfg.r, lam, rho, rng, cfg.p)
        spectral = cfg.spectral_for(1, i)
        delta = delta_norm(a, b, spectral)
        y = _max_matched_sin(a, b, cfg.r)
        retried = False
        if y > delta / lam:
            retried = True
            delta = max(delta, delta_norm(a, b, spectral.scaled(RETRY_FACTOR)))
            logger.debug("omega = %.6g: y > x, reestimación con %d arranques", omega, spectral.restarts * RETRY_FACTOR)
        x = delta / lam
        rows.append({
            "omega": omega, "lambda": lam, "rho": rho, "delta_over_lambda": x,
            "max_sin_angle": y, "ratio": y / x if x > 0 else float("nan"), "retried": retried,
        })
    frame = pd.DataFrame(rows)
    bad = int(np.sum(frame["max_sin_angle"] > frame["delta_over_lambda"]))
    small = frame[frame["delta_over_lambda"] < TIGHT_REGIME]
    tight = float(np.mean(small["ratio"] >= 0.9)) if len(small) else float("nan")
    checks = (
        Check("figure1_bounded", bad, 0, 0, bad == 0, "filas con y > x"),
        tight_check(frame, cfg.p),
    )
    meta = cfg.metadata()
    meta["tight_fraction"] = tight
    meta["ratio_floor"] = ratio_floor(cfg.p)
    logger.info("✓ Barrido en omega: %d filas, %d con y > x", len(frame), bad)
    return ExperimentResult("figure1", frame, checks, meta)


# ============ MODELO X = T + E ============

def _spiked(d: int, r: int, lam: float, p: int) -> OdecoTensor:
    eye = np.eye(d)[:, :r]
    return OdecoTensor.from_components(np.full(r, float(lam)), [eye] * p)


def _estimate(x: DenseTensor, r: int, cfg: IterationConfig, seed: int) -> OdecoTensor:
    result = decompose_odeco(x, r, replace(cfg, deflation_mode="subtract"), seed=seed)
    return refine(x, result, cfg).odeco


def figure2(cfg: ExperimentConfig) -> ExperimentResult:
    """
    X = lambda sum_{i<r} e_i^⊗p + E con E normal estándar. Se estima T~ con
    deflación por resta y refinamiento sobre X sin deflactar (sustituto del
    ajuste alternado). Se emiten max sin∠ y ||T~ - T||/lambda, ambos
    normalizados también por ||E||. La última fila apaga el ruido.
    """
    omegas = omega_grid(cfg.full, cfg.grid_points)
    dims = (cfg.d,) * cfg.p
    rows = []
    for i, omega in enumerate(list(omegas) + [np.inf]):
        noise_off = not np.isfinite(omega)
        lam = (1000.0 if noise_off else omega) * cfg.d ** 0.75
        truth = _spiked(cfg.d, cfg.r, lam, cfg.p)
        rng = np.random.default_rng([cfg.seed, 2, i])
        noise = np.zeros(dims) if noise_off else cfg.noise_sd * rng.standard_normal(dims)
        observed = tensor_add(to_dense(truth), DenseTensor(noise))
        approx = _estimate(observed, cfg.r, cfg.iteration, seed=cfg.seed + i)
        spectral = cfg.spectral_for(2, i)
        noise_norm = 0.0 if noise_off else spectral_norm_with(DenseTensor(noise), spectral)[0]
        fit = spectral_norm_with(tensor_sub(to_dense(approx), to_dense(truth)), spectral)[0]
        max_sin = _max_matched_sin(truth, approx, cfg.r)
        ratio = noise_norm / lam
        rows.append({
            "omega": omega, "lambda": lam, "noise_norm": noise_norm,
            "delta_over_lambda": fit / lam, "max_sin": max_sin, "noise_over_lambda": ratio,
            "sin_over_noise": max_sin / ratio if ratio > 0 else float("nan"),
        })
    frame = pd.DataFrame(rows)
    last = frame.iloc[-1]
    checks = (
        Check("figure2_noise_off_sin", last["max_sin"], 0.0, 1e-8, bool(last["max_sin"] < 1e-8)),
        Check("figure2_noise_off_fit", last["delta_over_lambda"], 0.0, 1e-8, bool(last["delta_over_lambda"] < 1e-8)),
    )
    meta = cfg.metadata()
    meta["approximation"] = "subtract deflation + refinement on X (alternating fit substitute)"
    meta["metric_note"] = "y-axis normalization ambiguous; both max_sin and delta_over_lambda emitted"
    high = frame[np.isfinite(frame["omega"]) & (frame["omega"] >= 100.0)]
    meta["high_snr_sin_over_noise_max"] = float(high["sin_over_noise"].max()) if len(high) else float("nan")
    logger.info("✓ Pares correlacionados: %d filas", len(frame))
    return ExperimentResult("figure2", frame, checks, meta)


# ============ CONTRAEJEMPLOS ============

def counterexamples(cfg: Optional[ExperimentConfig] = None) -> ExperimentResult:
    """Hechos cerrados que el código debe reproducir."""
    cfg = cfg or ExperimentConfig(experiment="counterexamples")
    spectral = cfg.spectral_for(3)
    checks: List[Check] = []

    a, b = weyl_pair()
    delta = delta_norm(a, b, spectral)
    gap = float(np.max(np.abs(a.lambdas - b.lambdas)))
    checks.append(_close("weyl_delta", delta, 4.0 / np.sqrt(3.0), 1e-6))
    checks.append(_close("weyl_gap", gap, 2.0 * np.sqrt(2.0), 1e-12))
    checks.append(Check("weyl_gap_exceeds_delta", gap - delta, 0.0, 0.0, gap > delta, "brecha > Δ"))

    d = 20
    a, b = orthogonal_counterexample(d)
    diff = tensor_sub(to_dense(a), to_dense(b))
    tensor_norm = spectral_norm_with(diff, spectral)[0]
    checks.append(_close("matricization_ratio", spectral_norm_2(matricize(diff, 0)) / tensor_norm, np.sqrt(d - 1), 1e-6))
    checks.append(_close("matricization_delta", tensor_norm, np.sqrt(2.0 / (d - 1)), 1e-6))

    checks.extend(_minmax_checks(4, cfg.seed))

    delta_m = 0.1
    m, m_tilde = matrix_gap_pair(delta_m)
    checks.append(_close("matrix_example_norm", spectral_norm_2(m - m_tilde), np.sqrt(2.0) * delta_m, 1e-12))
    top = dense_svd(m)[0][:, 0]
    top_tilde = dense_svd(m_tilde)[0][:, 0]
    checks.append(_close("matrix_example_sin", sin_angle(top, top_tilde), 1.0 / np.sqrt(2.0), 1e-12))

    a, b = swapped_pair(0.1)
    checks.append(_close("swapped_matching", float(match_tuples(a, b).pi[0]), 1.0, 0.0))

    frame = pd.DataFrame([asdict(c) for c in checks])
    failed = [c.name for c in checks if not c.passed]
    if failed:
        logger.warning("Contraejemplos fallidos: %s", failed)
    else:
        logger.info("✓ Contraejemplos: %d comprobaciones", len(checks))
    return ExperimentResult("counterexamples", frame, tuple(checks), cfg.metadata())


def _minmax_checks(d: int, seed: int, samples: int = 10_000) -> List[Check]:
    """
    T = sum_i e_i^⊗3: el máximo interno sobre x^(2), x^(3) es el mayor valor
    singular de T x_1 x^(1) y su mínimo sobre x^(1) vale 1/√d.
    """
    eye = np.eye(d)
    t = to_dense(OdecoTensor(np.ones(d), (eye, eye, eye)))
    mat = matricize(t, 0)
    symmetric = np.full(d, 1.0 / np.sqrt(d))
    at_symmetric = float(dense_svd((symmetric @ mat).reshape(d, d))[1][0])
    rng = np.random.default_rng([seed, 4])
    x = rng.standard_normal((samples, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    inner = np.array([spectral_norm_2(m) for m in (x @ mat).reshape(samples, d, d)])
    target = 1.0 / np.sqrt(d)
    lowest = float(np.min(inner))
    return [
        _close("minmax_symmetric", at_symmetric, target, 1e-9),
        Check("minmax_samples", lowest, target, 1e-9, lowest >= target - 1e-9, f"{samples} muestras"),
    ]


# ============ TASAS DEL SVD TENSORIAL ============

def svd_rates(
    cfg: ExperimentConfig,
    sizes: Sequence[int] = (8, 12, 16, 20),
    r: int = 4,
    kappa: float = 8.0,
    trials: int = 20,
) -> ExperimentResult:
    """
    X = T + E con lambda = kappa √(d_1 + ... + d_p). Para cada d se compara
    la media de max sin∠ con la envolvente √(Σd)/lambda y con lambda doble
    (mismos factores y mismo E). También ||E||/√(Σd).
    """
    rows = []
    for d in sizes:
        dims = (d,) * cfg.p
        total = float(np.sum(dims))
        lam = kappa * np.sqrt(total)
        errors = {1: [], 2: []}
        noise_ratio = []
        for trial in range(trials):
            base = random_odeco(dims, r, np.ones(r), seed=cfg.seed + 1000 * d + trial)
            rng = np.random.default_rng([cfg.seed, 5, d, trial])
            noise = DenseTensor(cfg.noise_sd * rng.standard_normal(dims))
            for scale in (1, 2):
                truth = OdecoTensor(base.lambdas * lam * scale, base.factors)
                approx = _estimate(tensor_add(to_dense(truth), noise), r, cfg.iteration, seed=cfg.seed + trial)
                errors[scale].append(_max_matched_sin(truth, approx, r))
            noise_ratio.append(spectral_norm_with(noise, cfg.spectral_for(5, d, trial))[0] / np.sqrt(total))
        mean1 = float(np.mean(errors[1]))
        mean2 = float(np.mean(errors[2]))
        rows.append({
            "d": d, "d_total": total, "lambda": lam, "mean_max_sin": mean1,
            "mean_max_sin_double": mean2, "bound": np.sqrt(total) / lam,
            "halving_ratio": mean2 / mean1 if mean1 > 0 else float("nan"),
            "noise_ratio": float(np.mean(noise_ratio)),
        })
        logger.debug("d = %d: error medio %.4g", d, mean1)
    frame = pd.DataFrame(rows)
    checks = (
        Check("rates_envelope", float(np.max(frame["mean_max_sin"] / frame["bound"])), 3.0, 0.0,
              bool(np.all(frame["mean_max_sin"] <= 3.0 * frame["bound"])), "error / envolvente"),
        Check("rates_halving", float(np.max(np.abs(frame["halving_ratio"] - 0.5))), 0.0, 0.125,
              bool(np.all(np.abs(frame["halving_ratio"] - 0.5) <= 0.125)), "lambda doble reduce el error a la mitad"),
        Check("rates_noise", float(np.max(np.abs(np.log2(frame["noise_ratio"])))), 0.0, 1.0,
              bool(np.all((frame["noise_ratio"] >= 0.5) & (frame["noise_ratio"] <= 2.0))), "||E||/√(Σd) en [0.5, 2]"),
    )
    meta = cfg.metadata()
    meta.update({"rank": r, "kappa": kappa, "trials": trials})
    logger.info("✓ Tasas SVD: %d tamaños", len(frame))
    return ExperimentResult("svd_rates", frame, checks, meta)


# ============ CONSTANTES ============

def epsilon_grid(start: float = 0.5, stop: float = 6.0, step: float = 0.02) -> np.ndarray:
    count = int(round((stop - start) / step)) + 1
    return np.round(start + step * np.arange(count), 10)


def constants_table(grid: Optional[Sequence[float]] = None, p: int = 3) -> ExperimentResult:
    """c_eps y max{1+eps, 1/c_eps} en la malla, con el minimizador."""
    grid = epsilon_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise InvalidParameterError("la malla de epsilon está vacía")
    records = [asdict(constants(float(eps), p)) for eps in grid]
    frame = pd.DataFrame(records)
    best = int(np.argmin(frame["objective"].to_numpy()))
    argmin = float(frame["epsilon"].iloc[best])
    objective = float(frame["objective"].iloc[best])
    tail = frame["c_epsilon"].to_numpy()[best:]
    decreasing = bool(np.all(np.diff(tail) <= 1e-15))
    checks = (
        Check("constants_objective", objective, 16.5, 0.5, 16.0 <= objective <= 17.0, "objetivo mínimo"),
        Check("constants_argmin", argmin, 2.95, 0.25, 2.7 <= argmin <= 3.2, "epsilon óptimo"),
        Check("constants_floor", float(np.min(frame["objective"] - (1.0 + frame["epsilon"]))), 0.0, 0.0,
              bool(np.all(frame["objective"] >= 1.0 + frame["epsilon"])), "objetivo >= 1 + eps"),
        Check("constants_decreasing", float(decreasing), 1.0, 0.0, decreasing, "c_eps decrece tras el mínimo"),
    )
    meta = {"experiment": "constants", "p": p, "grid_start": float(grid[0]), "grid_stop": float(grid[-1]),
            "grid_size": int(grid.size), "argmin": argmin, "objective": objective}
    logger.info("✓ Constantes: mínimo %.4f en eps = %.2f", objective, argmin)
    return ExperimentResult("constants", frame, checks, meta)


# ============ ENSAMBLES ============

def verify_with_retry(
    a: OdecoTensor,
    b: OdecoTensor,
    epsilon: float,
    spectral: SpectralNormConfig,
    delta: Optional[float] = None,
) -> PerturbationReport:
    """verify_bounds; si falla, Δ se reestima con 10 veces más arranques."""
    if delta is None:
        delta = delta_norm(a, b, spectral)
    report = verify_bounds(a, b, epsilon, delta=delta)
    if report.passed:
        return report
    better = max(delta, delta_norm(a, b, spectral.scaled(RETRY_FACTOR)))
    logger.debug("Reestimación de Δ: %.6g -> %.6g", delta, better)
    return verify_bounds(a, b, epsilon, delta=better)


def _perturbed(a: OdecoTensor, r: int, scale: float, rng: np.random.Generator) -> OdecoTensor:
    lambdas = a.lambdas[:r] + scale * float(np.min(a.lambdas[:r])) * rng.standard_normal(r)
    factors = [polar_factor(f[:, :r] + scale * rng.standard_normal((f.shape[0], r))) for f in a.factors]
    return OdecoTensor.from_components(np.abs(lambdas), factors)


def sharp_ensemble(cfg: ExperimentConfig, count: int = 100, max_d: int = 20) -> ExperimentResult:
    """
    Pares aleatorios con Δ <= c_eps lambda_min / 2 (p = 3, d <= max_d); uno
    de cada cuatro con todos los lambda iguales. Cero violaciones esperadas
    en valores, vectores y residuo de segundo orden.
    """
    c_eps = constants(cfg.epsilon).c_epsilon
    rows = []
    for n in range(count):
        rng = np.random.default_rng([cfg.seed, 6, n])
        d = int(rng.integers(3, max_d + 1))
        r = int(rng.integers(1, d + 1))
        lambdas = np.full(r, 5.0) if n % 4 == 0 else rng.uniform(1.0, 10.0, r)
        a = random_odeco((d, d, d), r, lambdas, seed=int(rng.integers(0, 2**31 - 1)))
        lam_min = float(np.min(a.lambdas[:r]))
        target = 0.5 * c_eps * lam_min
        spectral = cfg.spectral_for(6, n)
        scale = 0.1 * c_eps
        state = rng.bit_generator.state
        for _ in range(60):
            rng.bit_generator.state = state
            b = _perturbed(a, r, scale, rng)
            delta = delta_norm(a, b, spectral)
            if delta <= target:
                break
            scale *= min(0.5, 0.9 * target / delta)
        report = verify_with_retry(a, b, cfg.epsilon, spectral, delta)
        rows.append({
            "instance": n, "d": d, "r": r, "equal_lambdas": n % 4 == 0, "delta": report.delta,
            "delta_over_lambda_min": report.delta / lam_min,
            "all_sharp": all(row.sharp for row in report.rows[:r]),
            "max_gap": report.max_gap,
            "max_sin_ratio": max(row.max_sin / row.bound_davis for row in report.rows[:r] if row.bound_davis > 0),
            "max_second_order": max(row.second_order_resid for row in report.rows[:r]),
            "passed": report.passed,
        })
    frame = pd.DataFrame(rows)
    violations = int((~frame["passed"]).sum())
    not_sharp = int((~frame["all_sharp"]).sum())
    checks = (
        Check("sharp_violations", violations, 0, 0, violations == 0),
        Check("sharp_regime", not_sharp, 0, 0, not_sharp == 0, "instancias fuera del régimen agudo"),
    )
    logger.info("✓ Ensamble agudo: %d pares, %d violaciones", count, violations)
    return ExperimentResult("sharp", frame, checks, cfg.metadata())


def _roundtrip_lambdas(n: int, r: int, rng: np.random.Generator) -> np.ndarray:
    lambdas = rng.uniform(1.0, 10.0, r)
    if n % 3 == 0 and r >= 2:
        lambdas[1] = lambdas[0]
    return lambdas


def roundtrip_ensemble(cfg: ExperimentConfig, count: int = 50) -> ExperimentResult:
    """
    decompose_odeco sobre to_dense(O) recupera O (p = 3 con d <= 20, p = 4 con
    d <= 8), incluidos valores repetidos. HOSVD se compara vector a vector
    cuando todas las brechas superan 0.1 y por ángulos principales si no.
    """
    rows = []
    for n in range(count):
        rng = np.random.default_rng([cfg.seed, 7, n])
        p = 3 if n % 2 == 0 else 4
        d = int(rng.integers(2, 21 if p == 3 else 9))
        r = int(rng.integers(1, d + 1))
        lambdas = _roundtrip_lambdas(n, r, rng)
        a = random_odeco((d,) * p, r, lambdas, seed=int(rng.integers(0, 2**31 - 1)))
        dense = to_dense(a)
        result = decompose_odeco(dense, r, cfg.iteration, seed=cfg.seed + n)
        found = result.odeco
        matching = match_tuples(a, found)
        max_sin = max(
            sin_angle(a.factors[q][:, k], found.factors[q][:, int(matching.pi[k])])
            for k in range(r) for q in range(p)
        )
        lam_error = max(abs(a.lambdas[k] - found.lambdas[int(matching.pi[k])]) for k in range(r))
        hosvd_error, hosvd_mode = _hosvd_error(a, hosvd(dense), r)
        rows.append({
            "instance": n, "p": p, "d": d, "r": r, "complete": result.complete,
            "max_sin": max_sin, "lambda_error": lam_error,
            "hosvd_mode": hosvd_mode, "hosvd_error": hosvd_error,
            "passed": result.complete and max_sin < 1e-6 and lam_error < 1e-8 and hosvd_error < 1e-8,
        })
    frame = pd.DataFrame(rows)
    violations = int((~frame["passed"]).sum())
    logger.info("✓ Ida y vuelta: %d instancias, %d fallos", count, violations)
    return ExperimentResult("roundtrip", frame, (Check("roundtrip_failures", violations, 0, 0, violations == 0),),
                            cfg.metadata())


def _hosvd_error(a: OdecoTensor, h: OdecoTensor, r: int) -> Tuple[float, str]:
    lam = a.lambdas
    gaps = np.abs(np.diff(lam[: min(r + 1, a.d_min)]))
    if gaps.size == 0 or np.min(gaps) > 0.1:
        worst = max(sin_angle(a.factors[q][:, k], h.factors[q][:, k]) for k in range(r) for q in range(a.order))
        return worst, "vectors"
    worst = 0.0
    start = 0
    while start < r:
        stop = start + 1
        while stop < r and abs(lam[stop] - lam[start]) <= 0.1:
            stop += 1
        for q in range(a.order):
            block = principal_sines(a.factors[q][:, start:stop], h.factors[q][:, start:stop])
            worst = max(worst, float(np.max(block)))
        start = stop
    return worst, "subspaces"


def attraction_ensemble(cfg: ExperimentConfig, count: int = 200, d: int = 10) -> ExperimentResult:
    """Arranques aleatorios de la iteración simultánea sobre un tensor fijo."""
    a = random_odeco((d,) * cfg.p, d, seed=cfg.seed)
    dense = to_dense(a)
    rows = []
    for i in range(count):
        init = random_rank1_point(dense.dims, np.random.default_rng([cfg.seed, 8, i]))
        try:
            tup = find_tuple(dense, init, cfg.iteration)
        except DegeneratePointError:
            rows.append({"init": i, "converged": False, "essential": -1, "max_sin": 1.0, "iterations": 0})
            continue
        distances = [
            max(sin_angle(tup.vectors[q], a.factors[q][:, k]) for q in range(cfg.p)) for k in range(a.d_min)
        ]
        k = int(np.argmin(distances))
        rows.append({
            "init": i, "converged": tup.converged, "essential": k,
            "max_sin": distances[k], "iterations": tup.iterations,
        })
    frame = pd.DataFrame(rows)
    misses = int(np.sum(~frame["converged"] | (frame["max_sin"] >= 1e-6)))
    logger.info("✓ Atracción: %d arranques, %d sin tupla esencial", count, misses)
    return ExperimentResult("attraction", frame, (Check("attraction_misses", misses, 0, 0, misses == 0),),
                            cfg.metadata())


def incoherent_ensemble(cfg: ExperimentConfig, count: int = 100, max_d: int = 12) -> ExperimentResult:
    """
    Proyección odeco de tensores CP casi ortogonales: distancia frente a
    (p+1) delta eta_1 y ángulos de columna frente a delta. Las violaciones de
    delta/√2 se cuentan aparte.
    """
    rows = []
    for n in range(count):
        rng = np.random.default_rng([cfg.seed, 9, n])
        d = int(rng.integers(3, max_d + 1))
        r = int(rng.integers(1, d + 1))
        spread = float(rng.uniform(0.01, 0.05))
        x = random_incoherent((d,) * cfg.p, r, spread=spread, seed=int(rng.integers(0, 2**31 - 1)))
        spectral = cfg.spectral_for(9, n)
        report = verify_projection(x, spectral)
        if not report.distance_holds:
            report = verify_projection(x, spectral.scaled(RETRY_FACTOR))
        rows.append({
            "instance": n, "d": d, "r": r, "spread": spread, "delta": report.delta,
            "distance": report.distance, "distance_bound": report.distance_bound,
            "max_column_sin": report.max_column_sin, "stated_holds": report.stated_angle_holds,
            "passed": report.passed,
        })
    frame = pd.DataFrame(rows)
    violations = int((~frame["passed"]).sum())
    meta = cfg.metadata()
    meta["stated_angle_violations"] = int((~frame["stated_holds"]).sum())
    logger.info("✓ Incoherentes: %d instancias, %d violaciones", count, violations)
    return ExperimentResult("incoherent", frame, (Check("incoherent_violations", violations, 0, 0, violations == 0),),
                            meta)


# ============ ORÁCULO DE MALLA (d = 2) ============

def _alignment(values: np.ndarray, theta1: np.ndarray, theta2: np.ndarray):
    """Residuos ortogonales de los modos 1 y 2 con v^(3) = T(v1, v2, ·) normalizado."""
    v1 = np.stack([np.cos(theta1), np.sin(theta1)], axis=-1)
    v2 = np.stack([np.cos(theta2), np.sin(theta2)], axis=-1)
    w1 = np.stack([-np.sin(theta1), np.cos(theta1)], axis=-1)
    w2 = np.stack([-np.sin(theta2), np.cos(theta2)], axis=-1)
    w = np.einsum("ijk,...i,...j->...k", values, v1, v2)
    lam = np.linalg.norm(w, axis=-1)
    safe = np.where(lam > 1e-12, lam, 1.0)
    v3 = w / safe[..., None]
    r1 = np.einsum("ijk,...j,...k,...i->...", values, v2, v3, w1)
    r2 = np.einsum("ijk,...i,...k,...j->...", values, v1, v3, w2)
    return r1, r2, lam, (v1, v2, v3)


def grid_oracle(t: OdecoTensor, points: int = 360, tol: float = 1e-4) -> List[Tuple[float, Tuple[np.ndarray, ...]]]:
    """
    Tuplas con lambda > 0 de un tensor 2 x 2 x 2 halladas por fuerza bruta:
    mínimos locales del residuo en una malla de ángulos (periódica en π)
    pulidos con fsolve. Devuelve una tupla por cada terna de rectas.
    """
    if t.dims != (2, 2, 2):
        raise InvalidParameterError("el oráculo de malla sólo cubre 2 x 2 x 2")
    values = to_dense(t).values
    angles = np.linspace(0.0, np.pi, points, endpoint=False)
    th1, th2 = np.meshgrid(angles, angles, indexing="ij")
    r1, r2, lam, _ = _alignment(values, th1, th2)
    scale = float(np.max(np.abs(t.lambdas)))
    residual = np.where(lam > 1e-8 * scale, np.hypot(r1, r2), np.inf)
    minima = (residual == ndimage.minimum_filter(residual, size=5, mode="wrap")) & (residual < 0.1 * scale)

    found: List[Tuple[float, Tuple[np.ndarray, ...]]] = []
    seen: List[Tuple[float, float]] = []
    for i, j in zip(*np.nonzero(minima)):
        def equations(z):
            a1, a2 = _alignment(values, np.asarray(z[0]), np.asarray(z[1]))[:2]
            return [float(a1), float(a2)]

        z, _, ier, _ = optimize.fsolve(equations, [angles[i], angles[j]], full_output=True, xtol=1e-13)
        a1, a2, lam_z, vectors = _alignment(values, np.asarray(z[0]), np.asarray(z[1]))
        if ier != 1 or max(abs(float(a1)), abs(float(a2))) > tol * scale or float(lam_z) <= 1e-8 * scale:
            continue
        key = (float(np.mod(z[0], np.pi)), float(np.mod(z[1], np.pi)))
        if any(_same_line(key, other, tol) for other in seen):
            continue
        seen.append(key)
        found.append((float(lam_z), tuple(np.asarray(v, dtype=float) for v in vectors)))
    return found


def _same_line(a: Tuple[float, float], b: Tuple[float, float], tol: float) -> bool:
    def close(x, y):
        diff = abs(x - y)
        return min(diff, np.pi - diff) <= tol
    return close(a[0], b[0]) and close(a[1], b[1])


def _same_tuple(lam: float, vectors: Sequence[np.ndarray], tup, tol: float) -> bool:
    return abs(lam - tup.value) <= tol * max(1.0, lam) and all(
        sin_angle(v, w) <= tol for v, w in zip(vectors, tup.vectors)
    )


def oracle_agreement(tuples, oracle, tol: float = 1e-4) -> Tuple[int, int]:
    """
    (missed, unseen): tuplas del oráculo sin pareja en la fórmula y tuplas
    de la fórmula que el oráculo no encontró. Ambas en cero = mismos conjuntos
    de rectas; los patrones de signo que dan las mismas rectas cuentan igual.
    """
    missed = sum(0 if any(_same_tuple(lam, vecs, tup, tol) for tup in tuples) else 1 for lam, vecs in oracle)
    unseen = sum(0 if any(_same_tuple(lam, vecs, tup, tol) for lam, vecs in oracle) else 1 for tup in tuples)
    return missed, unseen


def nonessential_ensemble(cfg: ExperimentConfig, count: int = 10) -> ExperimentResult:
    """
    Cada tupla cerrada (todo subconjunto y patrón de signos) cumple las
    ecuaciones con residuo < 1e-8 para d <= 3, p = 3. En d = 2 el oráculo de
    malla y la fórmula dan el mismo conjunto de tuplas positivas.
    """
    rows = []
    for n in range(count):
        d = 2 if n % 2 == 0 else 3
        lambdas = np.array([2.0, 1.0]) if n == 0 else None
        a = random_odeco((d, d, d), d, lambdas, seed=cfg.seed + n)
        dense = to_dense(a)
        tuples = all_tuples(a)
        worst = max(tuple_residual(dense, tup) for tup in tuples)
        missed = extra = 0
        oracle_count = 0
        if d == 2:
            oracle = grid_oracle(a)
            oracle_count = len(oracle)
            missed, extra = oracle_agreement(tuples, oracle)
        rows.append({
            "instance": n, "d": d, "tuples": len(tuples), "max_residual": worst,
            "oracle_tuples": oracle_count, "missed": missed, "unseen": extra,
            "passed": worst < 1e-8 and missed == 0 and extra == 0,
        })
    frame = pd.DataFrame(rows)
    violations = int((~frame["passed"]).sum())
    logger.info("✓ No esenciales: %d instancias, %d fallos", count, violations)
    return ExperimentResult("nonessential", frame,
                            (Check("nonessential_failures", violations, 0, 0, violations == 0),), cfg.metadata())


def run_ensemble(kind: str, cfg: ExperimentConfig, count: Optional[int] = None) -> ExperimentResult:
    runners = {
        "sharp": sharp_ensemble,
        "roundtrip": roundtrip_ensemble,
        "incoherent": incoherent_ensemble,
        "attraction": attraction_ensemble,
        "nonessential": nonessential_ensemble,
    }
    if kind not in runners:
        raise InvalidParameterError(f"ensamble desconocido: {kind}; opciones {ENSEMBLE_KINDS}")
    if count is None:
        return runners[kind](cfg)
    return runners[kind](cfg, count=count)
