"""
Неточный метод Ньютона–КГ с ограниченным шагом для положений меток.

Без линейного поиска по J: шаг ограничивается в ∞-норме, а каждое
решение состояния стартует из равновесия предыдущей итерации
(продолжение по решению), чтобы оставаться на одной ветви.
"""
import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np

from app.core.config import settings
from app.core.exceptions import InvalidArgumentError, SolverFailureError, StateSolveError
from app.schemas.optimizer import CGStatus, OptimizerConfig, OptIterationRecord, OptTrace, StopReason
from app.schemas.reports import StateSolveReport
from app.services.design_problem import DesignEvaluation, GuidepostDesignProblem
from app.services.fem import FieldLike, NodalField, as_values
from app.services.guideposts import DesignVariables

logger = logging.getLogger(__name__)

HessianAction = Callable[[np.ndarray], np.ndarray]
IterationCallback = Callable[[OptIterationRecord, DesignEvaluation], None]


class CGResult(NamedTuple):
    dz: np.ndarray
    status: CGStatus
    iterations: int


def cg_solve(H: HessianAction, g: np.ndarray, rtol: float, max_iter: int) -> CGResult:
    """
    Усечённый метод сопряжённых градиентов для H δz = −g.

    Останавливается при ‖H δz + g‖ ≤ rtol·‖g‖ или при отрицательной
    кривизне dᵀHd ≤ 0: на первой итерации возвращает −g, позже -
    последнее приближение до обнаружения.

    Args:
        H: Действие гессиана
        g: Градиент
        rtol: Относительный допуск
        max_iter: Предел итераций (= числу действий H)

    Returns:
        CGResult(dz, status, iterations)
    """
    g = np.asarray(g, dtype=float)
    if max_iter < 1:
        raise InvalidArgumentError("max_iter должен быть >= 1")
    g_norm = float(np.linalg.norm(g))
    if g_norm == 0.0:
        return CGResult(np.zeros_like(g), CGStatus.CONVERGED, 0)

    dz = np.zeros_like(g)
    r = g.copy()
    d = -r
    rr = float(r @ r)
    for j in range(max_iter):
        Hd = np.asarray(H(d), dtype=float)
        curvature = float(d @ Hd)
        if curvature <= 0.0:
            if j == 0:
                return CGResult(-g, CGStatus.NEGATIVE_CURVATURE, 1)
            return CGResult(dz, CGStatus.NEGATIVE_CURVATURE, j + 1)
        alpha = rr / curvature
        dz = dz + alpha * d
        r = r + alpha * Hd
        rr_new = float(r @ r)
        if np.sqrt(rr_new) <= rtol * g_norm:
            return CGResult(dz, CGStatus.CONVERGED, j + 1)
        d = -r + (rr_new / rr) * d
        rr = rr_new
    return CGResult(dz, CGStatus.MAX_ITER, max_iter)


def forcing_term(g_norm: float, g0_norm: float) -> float:
    """r_tol = min(0.5, √(‖∇J‖/‖∇J⁽⁰⁾‖))."""
    if g0_norm <= 0.0:
        raise InvalidArgumentError("Норма начального градиента должна быть положительна", {"g0_norm": g0_norm})
    if g_norm < 0.0:
        raise InvalidArgumentError("Норма градиента отрицательна", {"g_norm": g_norm})
    return min(0.5, float(np.sqrt(g_norm / g0_norm)))


def clip_step(dz: np.ndarray, l_max: float) -> Tuple[float, np.ndarray]:
    """
    β_z = min(1, l_max/‖δz‖∞) и ограниченный шаг β_z·δz.

    Естественный шаг β_z = 1 сохраняется, если ‖δz‖∞ ≤ l_max.
    """
    if not l_max > 0:
        raise InvalidArgumentError("l_max должен быть положителен", {"l_max": l_max})
    dz = np.asarray(dz, dtype=float)
    norm = float(np.max(np.abs(dz))) if dz.size else 0.0
    if norm <= l_max:
        return 1.0, dz.copy()
    beta = l_max / norm
    step = np.clip(beta * dz, -l_max, l_max)
    return beta, step


@dataclass
class OptimizeResult:
    z: DesignVariables
    state: Optional[StateSolveReport]
    trace: OptTrace
    evaluation: DesignEvaluation


class DesignOptimizer:
    """
    Внешний цикл оптимизации.

    Итерация: решение состояния с тёплым стартом, сопряжённая задача,
    ∇J = ∇Q + ∇P, КГ с forcing term, ограничение шага и обновление z.
    """

    def __init__(self, problem: GuidepostDesignProblem, cfg: OptimizerConfig):
        self.problem = problem
        self.cfg = cfg
        self.salvage_residual = cfg.salvage_residual or settings.SALVAGE_RESIDUAL

    def _checked_state(self, z: DesignVariables, u_init: FieldLike, k: int) -> Optional[StateSolveReport]:
        """
        Решение состояния на итерации k с правилом спасения.

        Несошедшийся отчёт и прерванное решение (StateSolveError) принимаются,
        если невязка последнего приближения ниже salvage_residual; иначе
        SolverFailureError с k и z.
        """
        if not self.problem.use_objective:
            return None
        try:
            state = self.problem.solve_state(z, u_init)
        except StateSolveError as e:
            state = e.report
            logger.warning(f"Итерация {k}: {e.message}")
        except SolverFailureError as e:
            raise SolverFailureError(
                f"Итерация {k}: {e.message}", {**e.detail, "k": k, "z": z.z.tolist()}
            ) from e
        if not state.converged:
            if state.final_residual < self.salvage_residual:
                logger.warning(
                    f"Итерация {k}: состояние не сошлось (‖B‖={state.final_residual:.3e}), "
                    f"принято как ниже порога {self.salvage_residual:.0e}"
                )
            else:
                raise SolverFailureError(
                    f"Итерация {k}: решение состояния не сошлось",
                    {
                        "k": k,
                        "residual": state.final_residual,
                        "iterations": state.iterations,
                        "z": z.z.tolist(),
                    },
                )
        return state

    def _record(self, k: int, ev: DesignEvaluation, cg: Optional[CGResult], beta_z: Optional[float]) -> OptIterationRecord:
        state = ev.state
        return OptIterationRecord(
            k=k,
            J=ev.J,
            Q=ev.Q,
            P=ev.P,
            grad_norm=ev.grad_norm,
            cg_iters=cg.iterations if cg else 0,
            cg_status=cg.status if cg else None,
            inner_iters=state.iterations if state else 0,
            newton_solves=state.newton_solves if state else 0,
            gammas=list(state.gammas) if state else [],
            beta_z=beta_z,
            state_converged=state.converged if state else True,
            state_residual=state.final_residual if state else 0.0,
            z=ev.z.z.tolist(),
        )

    def optimize(
        self,
        z0: DesignVariables,
        u_init: FieldLike,
        callback: Optional[IterationCallback] = None,
    ) -> OptimizeResult:
        """
        Оптимизирует положения меток из z0.

        Args:
            z0: Начальные положения
            u_init: Начальное приближение первого решения состояния
            callback: Вызывается после каждой итерации (запись журнала, вычисление)

        Returns:
            OptimizeResult; trace содержит iterations + 1 записей
        """
        cfg, problem = self.cfg, self.problem
        mesh = problem.mesh
        u_prev = NodalField(mesh, as_values(u_init, mesh))

        state = self._checked_state(z0, u_prev, 0)
        ev = problem.evaluate(z0, u_prev, state=state)
        g0_norm = ev.grad_norm
        trace = OptTrace(records=[self._record(0, ev, None, None)])
        logger.info(f"Итерация 0: J={ev.J:.8g} Q={ev.Q:.6g} P={ev.P:.6g} ‖∇J‖={g0_norm:.3e}")
        if callback:
            callback(trace.records[0], ev)

        k = 0
        while True:
            if ev.grad_norm <= cfg.g_tol:
                trace.converged = True
                trace.stop_reason = StopReason.GRADIENT_TOLERANCE
                break
            if k >= cfg.max_outer:
                trace.stop_reason = StopReason.MAX_OUTER
                break

            rtol = cfg.cg_rtol if cfg.cg_rtol is not None else forcing_term(ev.grad_norm, g0_norm)
            cg = cg_solve(problem.hessian_operator(ev), ev.grad, rtol, cfg.cg_max)
            beta_z, step = clip_step(cg.dz, cfg.l_max)
            z = ev.z.with_z(ev.z.z + step)

            if ev.state is not None:
                u_prev = ev.state.u
            k += 1
            state = self._checked_state(z, u_prev, k)
            ev = problem.evaluate(z, u_prev, state=state)

            trace.records.append(self._record(k, ev, cg, beta_z))
            logger.info(
                f"Итерация {k}: J={ev.J:.8g} ‖∇J‖={ev.grad_norm:.3e} "
                f"КГ={cg.iterations} ({cg.status.value}) β_z={beta_z:.3g}"
            )
            if callback:
                callback(trace.records[-1], ev)

        trace.solve_counts = problem.ledger.snapshot()
        trace.solve_identity_holds = problem.ledger.identity_holds()
        logger.info(
            f"Оптимизация завершена ({trace.stop_reason.value}): итераций {trace.iterations}, "
            f"внутренних {trace.total_inner_iters}, решений {trace.solve_counts.get('total', 0)}"
        )
        return OptimizeResult(z=ev.z, state=ev.state, trace=trace, evaluation=ev)


def optimize(
    problem: GuidepostDesignProblem,
    z0: DesignVariables,
    u_init: FieldLike,
    cfg: OptimizerConfig,
    callback: Optional[IterationCallback] = None,
) -> OptimizeResult:
    return DesignOptimizer(problem, cfg).optimize(z0, u_init, callback=callback)
