"""
Свободная энергия Ohta–Kawasaki с подложкой, слабая невязка и химический потенциал.
"""
import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import scipy.sparse as sp

from app.core.config import settings
from app.core.exceptions import InvalidArgumentError
from app.schemas.model import ModelParams
from app.services.fem import (
    FieldLike,
    Mesh,
    NodalField,
    SparseOperator,
    as_values,
    assemble_pointwise_load,
    h1_dual_norm,
    integrate_pointwise,
    solve_sparse,
)

logger = logging.getLogger(__name__)

ArrayOrFloat = Union[np.ndarray, float]


def double_well(u: ArrayOrFloat, order: int = 0) -> ArrayOrFloat:
    """
    Двухъямный потенциал W(u) = ¼(u²−1)² и его производные.

    Args:
        u: Значение или массив значений
        order: Порядок производной 0..3
    """
    if order == 0:
        return 0.25 * (u * u - 1.0) ** 2
    if order == 1:
        return u * u * u - u
    if order == 2:
        return 3.0 * u * u - 1.0
    if order == 3:
        return 6.0 * u
    raise InvalidArgumentError(f"Порядок производной должен быть 0..3, получено {order}")


def double_well_gamma(u: ArrayOrFloat, gamma: float) -> ArrayOrFloat:
    """Модифицированная вторая производная W″_γ(u) = 2u² + γ(u²−1)."""
    if not 0.0 <= gamma <= 1.0:
        raise InvalidArgumentError(f"γ должно лежать в [0, 1], получено {gamma}")
    return 2.0 * u * u + gamma * (u * u - 1.0)


@dataclass(frozen=True)
class ResidualPair:
    """Дискретные двойственные невязки двух слабых уравнений."""

    r_u: np.ndarray
    r_mu: np.ndarray

    def norm(self, mesh: Mesh) -> float:
        return h1_dual_norm(mesh, self.r_u, self.r_mu)


def _pinned_laplacian(mesh: Mesh) -> SparseOperator:
    # K, дополненная множителем Лагранжа для условия 𝟙ᵀM w = 0
    col = sp.csr_matrix(mesh.lumped_mass.reshape(-1, 1))
    matrix = sp.bmat([[mesh.stiffness.matrix, col], [col.T, None]], format="csr")
    return SparseOperator(matrix, symmetric=True, name="pinned_laplacian")


def inv_neumann_laplacian(mesh: Mesh, g: np.ndarray) -> NodalField:
    """
    Обратный лапласиан Неймана w = (−Δ_N)⁻¹g для двойственных данных g.

    Решает K w = g с условием ∫w dx = 0. Требует совместности 𝟙ᵀg ≈ 0.
    """
    g = np.asarray(g, dtype=float)
    if g.shape[0] != mesh.n_nodes:
        raise InvalidArgumentError("Размер данных не совпадает с сеткой")
    if not np.any(g):
        return NodalField.zeros(mesh)
    total, norm = float(g.sum()), float(np.linalg.norm(g))
    if abs(total) > settings.MASS_COMPAT_RTOL * norm:
        raise InvalidArgumentError(
            "Данные несовместны с задачей Неймана (ненулевое среднее)",
            {"sum": total, "norm": norm},
        )
    operator = mesh.cached("pinned_laplacian", lambda: _pinned_laplacian(mesh))
    sol = solve_sparse(operator, np.append(g, 0.0), reuse=True)
    return NodalField(mesh, sol[:-1], copy=False)


def _nonlocal_potential(mesh: Mesh, u: np.ndarray, p: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """Нулесредняя часть d = u − m и w = (−Δ_N)⁻¹ d (как узловые векторы)."""
    d = u - p.m
    drift = mesh.mean(d)
    if abs(drift) > settings.MASS_COMPAT_RTOL:
        logger.warning(f"Среднее (u − m) = {drift:.3e} превышает допуск; нелокальный член берётся по проекции")
    d0 = d - drift
    return d0, inv_neumann_laplacian(mesh, mesh.mass @ d0).values


def free_energy(u: FieldLike, f: FieldLike, p: ModelParams, mesh: Mesh) -> float:
    """
    Полная свободная энергия F = F_OK + ∫ f u dx.

    F_OK = ∫W(u) + (ε²/2)∫|∇u|² + (σ/2)‖u − m‖²_{H⁻¹}.
    """
    u = as_values(u, mesh)
    f = as_values(f, mesh)
    bulk = integrate_pointwise(mesh, double_well, u)
    gradient = 0.5 * p.eps**2 * float(u @ (mesh.stiffness @ u))
    nonlocal_term = 0.0
    if p.sigma > 0.0:
        d0, w = _nonlocal_potential(mesh, u, p)
        nonlocal_term = 0.5 * p.sigma * float(d0 @ (mesh.mass @ w))
    substrate = float(f @ (mesh.mass @ u))
    return bulk + gradient + nonlocal_term + substrate


def energy_gradient(u: FieldLike, f: FieldLike, p: ModelParams, mesh: Mesh) -> np.ndarray:
    """
    Первая вариация ⟨D_uF, ·⟩ как двойственный вектор.

    Спаривание с направлением v с нулевым средним даёт производную F по v.
    """
    u = as_values(u, mesh)
    f = as_values(f, mesh)
    g = assemble_pointwise_load(mesh, lambda uq: double_well(uq, 1), u)
    g += p.eps**2 * (mesh.stiffness @ u) + mesh.mass @ f
    if p.sigma > 0.0:
        _, w = _nonlocal_potential(mesh, u, p)
        g += p.sigma * (mesh.mass @ w)
    return g


def residual(u: FieldLike, mu: FieldLike, f: FieldLike, p: ModelParams, mesh: Mesh) -> ResidualPair:
    """
    Слабая невязка B(u, μ).

    r_u = Kμ + σM(u − m), r_mu = Mμ − load(W′(u)) − ε²Ku − Mf.
    """
    u = as_values(u, mesh)
    mu = as_values(mu, mesh)
    f = as_values(f, mesh)
    r_u = mesh.stiffness @ mu + p.sigma * (mesh.mass @ (u - p.m))
    r_mu = (
        mesh.mass @ mu
        - assemble_pointwise_load(mesh, lambda uq: double_well(uq, 1), u)
        - p.eps**2 * (mesh.stiffness @ u)
        - mesh.mass @ f
    )
    return ResidualPair(r_u=r_u, r_mu=r_mu)


def chemical_potential(u: FieldLike, f: FieldLike, p: ModelParams, mesh: Mesh) -> NodalField:
    """Химический потенциал μ = M⁻¹(load(W′(u)) + ε²Ku + Mf)."""
    u = as_values(u, mesh)
    f = as_values(f, mesh)
    rhs = assemble_pointwise_load(mesh, lambda uq: double_well(uq, 1), u)
    rhs += p.eps**2 * (mesh.stiffness @ u) + mesh.mass @ f
    return NodalField(mesh, solve_sparse(mesh.mass, rhs, reuse=True), copy=False)


def design_objective(u: FieldLike, u_d: FieldLike, mesh: Mesh) -> float:
    """Целевой функционал Q(u; u_d) = ‖u − u_d‖²_{L²}."""
    diff = as_values(u, mesh) - as_values(u_d, mesh)
    return float(diff @ (mesh.mass @ diff))
