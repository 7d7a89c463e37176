"""
Archivo de configuración
Todos los valores numéricos por defecto se leen del entorno (.env)
"""
import os
from typing import Any, Mapping, Optional

from dotenv import load_dotenv

from services.decompose import IterationConfig
from services.tensor_core import SpectralNormConfig

load_dotenv()


def _env(name: str, default: Any, cast=float):
    value = os.environ.get(name)
    return cast(value) if value not in (None, '') else default


class Config:
    """Configuración base de la aplicación"""
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')

    # Semilla por defecto de los experimentos
    ODECO_SEED = _env('ODECO_SEED', 20240601, int)

    # Norma espectral multi-arranque
    SPECTRAL_RESTARTS = _env('SPECTRAL_RESTARTS', 200, int)
    SPECTRAL_TOL = _env('SPECTRAL_TOL', 1e-10)
    SPECTRAL_MAX_ITER = _env('SPECTRAL_MAX_ITER', 500, int)

    # Iteración de gradiente
    ITER_TOL = _env('ITER_TOL', 1e-12)
    ITER_MAX = _env('ITER_MAX', 1000, int)
    ITER_RESTARTS = _env('ITER_RESTARTS', 50, int)

    EPSILON = _env('EPSILON', 0.05)
    GRID_POINTS = _env('GRID_POINTS', 20, int)
    FULL_GRID = False
    OUTPUT_DIR = os.environ.get('OUTPUT_DIR', '.')

    DEBUG = False
    TESTING = False

    # JSON
    JSON_SORT_KEYS = False


class DevelopmentConfig(Config):
    """Configuración para desarrollo"""
    DEBUG = True


class ProductionConfig(Config):
    """Configuración para producción"""
    DEBUG = False


class TestingConfig(Config):
    """Configuración para testing: menos arranques para que la suite sea rápida"""
    TESTING = True
    SPECTRAL_RESTARTS = 40
    ITER_RESTARTS = 10
    GRID_POINTS = 4


class FullConfig(Config):
    """Mallas y arranques completos"""
    SPECTRAL_RESTARTS = _env('SPECTRAL_RESTARTS', 1000, int)
    GRID_POINTS = _env('GRID_POINTS', 200, int)
    FULL_GRID = True


PROFILES = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'full': FullConfig,
}


def get_config(env: Optional[str] = None):
    """
    Obtiene la clase de configuración según el entorno.

    Args:
        env: 'development', 'production', 'testing' o 'full'.
             Si es None, usa la variable ODECO_ENV
    """
    if env is None:
        env = os.environ.get('ODECO_ENV', 'development')
    if env not in PROFILES:
        raise ValueError(f"Entorno desconocido: {env}. Opciones: {list(PROFILES)}")
    return PROFILES[env]


def _get(config: Any, key: str):
    if isinstance(config, Mapping):
        return config[key]
    return getattr(config, key)


def spectral_config(config: Any, restarts: Optional[int] = None, seed: Optional[int] = None,
                    tol: Optional[float] = None) -> SpectralNormConfig:
    """SpectralNormConfig desde una clase de configuración o app.config."""
    return SpectralNormConfig(
        restarts=int(restarts if restarts is not None else _get(config, 'SPECTRAL_RESTARTS')),
        tol=float(tol if tol is not None else _get(config, 'SPECTRAL_TOL')),
        max_iter=int(_get(config, 'SPECTRAL_MAX_ITER')),
        seed=int(seed if seed is not None else _get(config, 'ODECO_SEED')),
    )


def iteration_config(config: Any, restarts: Optional[int] = None, tol: Optional[float] = None,
                     deflation_mode: str = 'orthogonal_complement') -> IterationConfig:
    """IterationConfig desde una clase de configuración o app.config."""
    return IterationConfig(
        tol=float(tol if tol is not None else _get(config, 'ITER_TOL')),
        max_iter=int(_get(config, 'ITER_MAX')),
        restarts=int(restarts if restarts is not None else _get(config, 'ITER_RESTARTS')),
        deflation_mode=deflation_mode,
    )
