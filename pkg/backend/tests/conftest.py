"""
Конфигурация для pytest.
"""
import logging

import numpy as np
import pytest

from app.schemas.guidepost import GuidepostConfig, GuidepostShape
from app.schemas.model import FieldSamplerParams, ModelParams
from app.services.fem import build_rect_mesh
from app.services.random_field import sample_initial_guess


@pytest.fixture(autouse=True)
def quiet_logging():
    """Понижает уровень логов решателей, чтобы не засорять вывод тестов."""
    logging.getLogger("app").setLevel(logging.WARNING)
    yield


@pytest.fixture
def unit_mesh():
    """Сетка [0, 1]² с шагом 0.1."""
    return build_rect_mesh(1.0, 1.0, 10, 10)


@pytest.fixture
def square3_mesh():
    """Сетка [0, 3]² с крупным шагом (для проверок энергии однородного состояния)."""
    return build_rect_mesh(3.0, 3.0, 6, 6)


@pytest.fixture
def solver_mesh():
    """Сетка [0, 1]² с шагом 0.05 = ε/2 для params_small."""
    return build_rect_mesh(1.0, 1.0, 20, 20)


@pytest.fixture
def params():
    """Параметры по умолчанию: (m, ε, σ) = (0, 0.08, 12.8)."""
    return ModelParams()


@pytest.fixture
def params_small():
    """Параметры для быстрых решений на единичном квадрате."""
    return ModelParams(eps=0.1, sigma=10.0, m=0.0)


@pytest.fixture
def sampler():
    return FieldSamplerParams(seed=3)


@pytest.fixture
def random_u0(solver_mesh, params_small, sampler):
    """Случайное начальное приближение на solver_mesh."""
    return sample_initial_guess(solver_mesh, params_small, sampler)


@pytest.fixture
def circle_config():
    """Одна круглая метка."""
    return GuidepostConfig(shape=GuidepostShape.CIRCLE, w=0.5, b=0.2, count=1)


@pytest.fixture
def strip_config():
    """Две полоски."""
    return GuidepostConfig(shape=GuidepostShape.STRIP, w=0.5, b=0.2, count=2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Маркеры для pytest
def pytest_configure(config):
    """Конфигурация pytest."""
    config.addinivalue_line(
        "markers", "unit: mark test as unit test"
    )
    config.addinivalue_line(
        "markers", "integration: mark test as integration test"
    )
    config.addinivalue_line(
        "markers", "slow: mark test as slow running"
    )
