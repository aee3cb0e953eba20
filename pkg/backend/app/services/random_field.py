"""
Начальные приближения u⁽⁰⁾ = m + s·erf(ξ).

ξ - гауссово поле с нулевым средним и ковариацией (δ_G I − γ_G Δ)⁻²,
реализованное как ξ = A⁻¹b, A = δ_G M + γ_G K, b_i = √(m_i)·η_i
(m_i - диагональ сосредоточенной матрицы масс, η ~ N(0, 1)).
Генератор: numpy PCG64 через default_rng(seed).
"""
import logging

import numpy as np
from scipy.special import erf

from app.schemas.model import FieldSamplerParams, ModelParams
from app.services.fem import Mesh, NodalField, SparseOperator, solve_sparse

logger = logging.getLogger(__name__)

# Наибольшее число double, строго меньшее 1
_ERF_BOUND = np.nextafter(1.0, 0.0)


def _covariance_root_inverse(mesh: Mesh, fp: FieldSamplerParams) -> SparseOperator:
    return mesh.cached(
        ("field_operator", fp.delta_G, fp.gamma_G),
        lambda: SparseOperator(
            fp.delta_G * mesh.mass.matrix + fp.gamma_G * mesh.stiffness.matrix,
            symmetric=True,
            name="field_operator",
        ),
    )


def sample_gaussian_field(mesh: Mesh, fp: FieldSamplerParams) -> np.ndarray:
    """Реализация ξ для зерна fp.seed (узловые значения)."""
    rng = np.random.default_rng(fp.seed)
    noise = np.sqrt(mesh.lumped_mass) * rng.standard_normal(mesh.n_nodes)
    return solve_sparse(_covariance_root_inverse(mesh, fp), noise, reuse=True)


def sample_initial_guess(mesh: Mesh, p: ModelParams, fp: FieldSamplerParams) -> NodalField:
    """
    Случайное начальное приближение вблизи однородного состояния m.

    Детерминировано по (сетка, параметры, зерно); значения строго
    внутри (m − s, m + s).

    Args:
        mesh: Сетка
        p: Параметры модели (используется m)
        fp: Параметры распределения и зерно

    Returns:
        NodalField u⁽⁰⁾
    """
    if fp.s == 0.0:
        return NodalField.constant(mesh, p.m)
    xi = sample_gaussian_field(mesh, fp)
    u0 = p.m + fp.s * np.clip(erf(xi), -_ERF_BOUND, _ERF_BOUND)
    # Округление суммы может дойти до границы интервала
    u0 = np.clip(u0, np.nextafter(p.m - fp.s, p.m), np.nextafter(p.m + fp.s, p.m))
    logger.debug(f"Начальное приближение seed={fp.seed}: min={u0.min():.4f} max={u0.max():.4f}")
    return NodalField(mesh, u0, copy=False)
