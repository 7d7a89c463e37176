"""Fixtures compartidos de la suite"""
import numpy as np
import pytest

from app import create_app
from config import TestingConfig
from services.decompose import IterationConfig
from services.odeco import OdecoTensor, random_odeco
from services.tensor_core import SpectralNormConfig


@pytest.fixture
def spectral_cfg():
    return SpectralNormConfig(restarts=100, seed=7)


@pytest.fixture
def iter_cfg():
    return IterationConfig(restarts=10)


@pytest.fixture
def identity_odeco():
    """3 e1⊗e1⊗e1 + 2 e2⊗e2⊗e2 + e3⊗e3⊗e3"""
    eye = np.eye(3)
    return OdecoTensor(np.array([3.0, 2.0, 1.0]), (eye, eye, eye))


@pytest.fixture
def small_odeco():
    return random_odeco((4, 5, 6), 3, [5.0, 3.0, 1.5], seed=11)


@pytest.fixture
def app():
    return create_app(TestingConfig)


@pytest.fixture
def client(app):
    return app.test_client()


@pytest.fixture
def testing_env(monkeypatch, tmp_path):
    """Perfil de pruebas para la CLI, con salida en tmp_path"""
    monkeypatch.setenv('ODECO_ENV', 'testing')
    monkeypatch.setattr(TestingConfig, 'OUTPUT_DIR', str(tmp_path))
    return tmp_path
