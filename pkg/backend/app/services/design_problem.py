"""
Приведённая задача проектирования J(z) = Q(u(f(z))) + P(z).

Связывает решатель состояния, сопряжённую чувствительность и
параметризацию метками: одно вычисление в точке z даёт J, ∇J
и замыкание для действий гессиана ∇²J.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from app.schemas.guidepost import GuidepostConfig, PenaltyParams
from app.schemas.model import ModelParams
from app.schemas.reports import StateSolveReport
from app.services.adjoint import AdjointPair, AdjointSensitivity, gradient_f
from app.services.energy import design_objective
from app.services.fem import FieldLike, Mesh, NodalField, SolveLedger, as_values
from app.services.guideposts import (
    DesignVariables,
    eval_substrate,
    grad_design,
    hessian_action_design,
    penalty_total,
)
from app.services.state_solver import StateSolver

logger = logging.getLogger(__name__)


@dataclass
class DesignEvaluation:
    """Состояние, стоимость и производные в одной точке z."""

    z: DesignVariables
    f: NodalField
    state: Optional[StateSolveReport]
    Q: float
    P: float
    grad_Q: np.ndarray
    grad_P: np.ndarray
    hess_P: np.ndarray
    adjoint: Optional[AdjointPair] = None

    @property
    def J(self) -> float:
        return self.Q + self.P

    @property
    def grad(self) -> np.ndarray:
        return self.grad_Q + self.grad_P

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.grad))


class GuidepostDesignProblem:
    """
    Задача поиска положений меток под целевую морфологию u_d.

    Args:
        mesh: Сетка области
        params: Параметры модели (ε, σ, m)
        guideposts: Форма и число меток
        penalty: Параметры штрафов
        u_d: Целевая морфология
        ledger: Журнал линейных решений
        use_objective: False - только штрафы, без решения PDE
    """

    def __init__(
        self,
        mesh: Mesh,
        params: ModelParams,
        guideposts: GuidepostConfig,
        penalty: PenaltyParams,
        u_d: FieldLike,
        ledger: Optional[SolveLedger] = None,
        use_objective: bool = True,
        state_tol: Optional[float] = None,
        state_max_iter: Optional[int] = None,
    ):
        self.mesh = mesh
        self.params = params
        self.guideposts = guideposts
        self.penalty = penalty
        self.u_d = NodalField(mesh, as_values(u_d, mesh))
        self.ledger = ledger if ledger is not None else SolveLedger()
        self.use_objective = use_objective
        self.state_tol = state_tol
        self.state_max_iter = state_max_iter
        self.solver = StateSolver(mesh, params, ledger=self.ledger)
        self.sensitivity = AdjointSensitivity(mesh, params, ledger=self.ledger)

    @property
    def n_design(self) -> int:
        return self.guideposts.n_design

    def penalties(self, z: DesignVariables):
        return penalty_total(z, self.penalty, self.mesh.l1, self.mesh.l2)

    def solve_state(self, z: DesignVariables, u_init: FieldLike) -> StateSolveReport:
        """Равновесие при f(z) из начального приближения u_init."""
        f = eval_substrate(z, self.guideposts, self.mesh)
        return self.solver.solve_state(f, u_init, tol=self.state_tol, max_iter=self.state_max_iter)

    def evaluate(
        self,
        z: DesignVariables,
        u_init: FieldLike,
        state: Optional[StateSolveReport] = None,
        with_adjoint: bool = True,
    ) -> DesignEvaluation:
        """
        Вычисляет J(z) и ∇J(z).

        Args:
            z: Положения меток
            u_init: Начальное приближение для решения состояния (продолжение);
                без целевого функционала состояние не решается
            state: Уже найденное состояние при f(z) (повторно не решается)
            with_adjoint: Решать сопряжённую задачу и собирать ∇Q

        Returns:
            DesignEvaluation
        """
        mesh = self.mesh
        f = eval_substrate(z, self.guideposts, mesh)
        if state is None and self.use_objective:
            state = self.solver.solve_state(f, u_init, tol=self.state_tol, max_iter=self.state_max_iter)
        P, grad_P, hess_P = self.penalties(z)

        Q = 0.0
        grad_Q = np.zeros(len(z))
        adjoint = None
        if self.use_objective:
            Q = design_objective(state.u, self.u_d, mesh)
            if with_adjoint:
                adjoint = self.sensitivity.solve_adjoint(self.u_d, u=state.u)
                grad_Q = grad_design(z, self.guideposts, gradient_f(adjoint.lam), mesh)

        return DesignEvaluation(
            z=z, f=f, state=state, Q=Q, P=P, grad_Q=grad_Q, grad_P=grad_P, hess_P=hess_P, adjoint=adjoint
        )

    def hessian_action(self, evaluation: DesignEvaluation, z_hat: np.ndarray) -> np.ndarray:
        """∇²J ẑ = ∇²Q ẑ + ∇²P ẑ в точке evaluation.z."""
        z_hat = np.asarray(z_hat, dtype=float)
        action = evaluation.hess_P @ z_hat
        if self.use_objective and evaluation.adjoint is not None:
            lam = evaluation.adjoint.lam
            action = action + hessian_action_design(
                evaluation.z,
                self.guideposts,
                z_hat,
                gradient_f(lam),
                lambda f_hat: self.sensitivity.hessian_action_f(lam, f_hat, u=evaluation.state.u),
                self.mesh,
            )
        return action

    def hessian_operator(self, evaluation: DesignEvaluation) -> Callable[[np.ndarray], np.ndarray]:
        return lambda z_hat: self.hessian_action(evaluation, z_hat)
