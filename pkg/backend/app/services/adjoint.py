"""
Сопряжённая чувствительность целевого функционала к полю подложки f.

Все системы в точке линеаризации u используют один оператор
A = [[σM, K], [−(M_W″ + ε²K), M]] и одну LU-факторизацию:
прямые инкрементальные задачи решаются с A, сопряжённые с Aᵀ.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from app.core.exceptions import InvalidArgumentError
from app.schemas.model import ModelParams
from app.services.energy import double_well
from app.services.fem import (
    FieldLike,
    Mesh,
    NodalField,
    SolveLedger,
    SparseOperator,
    as_values,
    assemble_pointwise_load,
    solve_sparse,
)
from app.services.state_solver import linearized_operator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdjointPair:
    """Сопряжённые переменные (p, λ) в точке линеаризации."""

    p: NodalField
    lam: NodalField


def gradient_f(lam: FieldLike, mesh: Optional[Mesh] = None) -> NodalField:
    """
    L²-представитель градиента ⟨D_fQ, f̃⟩ = −(λ, f̃): узловое поле −λ.

    Спаривание с возмущением f̃ всегда через M: −f̃ᵀMλ.
    """
    if isinstance(lam, NodalField):
        return NodalField(lam.mesh, -lam.values, copy=False)
    if mesh is None:
        raise InvalidArgumentError("Для массива λ нужна сетка")
    return NodalField(mesh, -as_values(lam, mesh), copy=False)


class AdjointSensitivity:
    """
    Градиент и действия гессиана Q(u(f)) = ‖u − u_d‖²_{L²} по f.

    Экземпляр привязан к сетке и параметрам; точка линеаризации задаётся
    set_linearization_point и держит факторизацию до следующей смены.
    Действия гессиана в одной точке можно вычислять параллельно.
    """

    def __init__(self, mesh: Mesh, params: ModelParams, ledger: Optional[SolveLedger] = None):
        self.mesh = mesh
        self.params = params
        self.ledger = ledger
        self._u: Optional[np.ndarray] = None
        self._operator: Optional[SparseOperator] = None

    def set_linearization_point(self, u: FieldLike) -> None:
        """Собирает оператор A(u) и сбрасывает кэш факторизации."""
        u = as_values(u, self.mesh).copy()
        u.setflags(write=False)
        self._u = u
        self._operator = linearized_operator(self.mesh, u, self.params, gamma=1.0)

    def _require(self, u: Optional[FieldLike]) -> SparseOperator:
        if u is not None:
            values = as_values(u, self.mesh)
            if self._u is None or not np.array_equal(values, self._u):
                self.set_linearization_point(values)
        if self._operator is None:
            raise InvalidArgumentError("Точка линеаризации не задана")
        return self._operator

    def _solve(self, rhs: np.ndarray, transpose: bool, category: str) -> Tuple[NodalField, NodalField]:
        n = self.mesh.n_nodes
        if self.ledger is not None:
            self.ledger.record(category)
        sol = solve_sparse(self._operator, rhs, reuse=True, transpose=transpose)
        return NodalField(self.mesh, sol[:n], copy=False), NodalField(self.mesh, sol[n:], copy=False)

    def solve_adjoint(self, u_d: FieldLike, u: Optional[FieldLike] = None) -> AdjointPair:
        """
        Сопряжённая задача Aᵀ[p; λ] = [−2M(u − u_d); 0].

        Args:
            u_d: Целевая морфология
            u: Сошедшееся состояние (если не задано, берётся текущая точка)

        Returns:
            AdjointPair

        Raises:
            SolverFailureError: вырожденный оператор (вырожденная критическая точка)
        """
        self._require(u)
        mesh = self.mesh
        source = 2.0 * (mesh.mass @ (self._u - as_values(u_d, mesh)))
        rhs = np.concatenate([-source, np.zeros(mesh.n_nodes)])
        p, lam = self._solve(rhs, transpose=True, category=SolveLedger.ADJOINT)
        return AdjointPair(p=p, lam=lam)

    def gradient_f(self, pair: AdjointPair) -> NodalField:
        return gradient_f(pair.lam)

    def solve_incremental_state(self, f_hat: FieldLike, u: Optional[FieldLike] = None) -> Tuple[NodalField, NodalField]:
        """Инкрементальная задача состояния A[û; μ̂] = [0; M f̂]."""
        self._require(u)
        mesh = self.mesh
        rhs = np.concatenate([np.zeros(mesh.n_nodes), mesh.mass @ as_values(f_hat, mesh)])
        return self._solve(rhs, transpose=False, category=SolveLedger.INCREMENTAL_FORWARD)

    def solve_incremental_adjoint(
        self, lam: FieldLike, u_hat: FieldLike, u: Optional[FieldLike] = None
    ) -> Tuple[NodalField, NodalField]:
        """
        Инкрементальная сопряжённая задача.

        Aᵀ[p̂; λ̂] = [−(2Mû − load(W‴(u)·λ·û)); 0], где ∂²_uQ û = 2û.
        """
        self._require(u)
        mesh = self.mesh
        u_hat = as_values(u_hat, mesh)
        source = 2.0 * (mesh.mass @ u_hat)
        lam = as_values(lam, mesh)
        if np.any(lam):
            source = source - assemble_pointwise_load(
                mesh, lambda uq, lq, hq: double_well(uq, 3) * lq * hq, self._u, lam, u_hat
            )
        rhs = np.concatenate([-source, np.zeros(mesh.n_nodes)])
        return self._solve(rhs, transpose=True, category=SolveLedger.INCREMENTAL_ADJOINT)

    def hessian_action_f(self, lam: FieldLike, f_hat: FieldLike, u: Optional[FieldLike] = None) -> NodalField:
        """
        Действие гессиана ⟨D²_fQ f̂, f̃⟩ = −(λ̂, f̃): узловое поле −λ̂.

        Ровно одна инкрементальная прямая и одна инкрементальная сопряжённая задача.
        """
        self._require(u)
        if self.ledger is not None:
            self.ledger.record_hessian_action()
        u_hat, _ = self.solve_incremental_state(f_hat)
        _, lam_hat = self.solve_incremental_adjoint(lam, u_hat)
        return NodalField(self.mesh, -lam_hat.values, copy=False)
