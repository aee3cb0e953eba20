"""
Энергетически устойчивый метод Ньютона для задачи состояния.

Модифицированная система Ньютона с W″_γ, перебор γ до направления спуска,
поиск шага по Армихо и остановка по двойственной норме невязки.
"""
import logging
from typing import Optional, Tuple

import numpy as np

from app.core.config import settings
from app.core.exceptions import DesignError, InvalidArgumentError, SolverFailureError, StateSolveError
from app.schemas.model import ModelParams
from app.schemas.reports import StateSolveReport
from app.services.energy import (
    chemical_potential,
    double_well,
    double_well_gamma,
    energy_gradient,
    free_energy,
    residual,
)
from app.services.fem import (
    FieldLike,
    Mesh,
    NodalField,
    SolveLedger,
    SparseOperator,
    as_values,
    assemble_weighted_mass,
    block_operator,
    solve_sparse,
)

logger = logging.getLogger(__name__)

# Сдвиг массы начального приближения меньше этого порога не применяется
_MASS_SHIFT_ATOL = 1e-12


def linearized_operator(mesh: Mesh, u: np.ndarray, p: ModelParams, gamma: float = 1.0) -> SparseOperator:
    """
    Блочный оператор линеаризации слабой системы в точке u.

        [ σM              K ] [δu]
        [ −(M_γ + ε²K)    M ] [δμ]

    M_γ - матрица масс с весом W″_γ(u); при γ = 1 это точный якобиан,
    общий для задачи Ньютона, сопряжённой и инкрементальных задач.
    """
    if gamma == 1.0:
        weight = lambda uq: double_well(uq, 2)  # noqa: E731
    else:
        weight = lambda uq: double_well_gamma(uq, gamma)  # noqa: E731
    curvature = assemble_weighted_mass(mesh, weight, u).matrix + p.eps**2 * mesh.stiffness.matrix
    return block_operator(
        [[p.sigma * mesh.mass.matrix, mesh.stiffness.matrix], [-curvature, mesh.mass.matrix]],
        name=f"linearized(gamma={gamma:g})",
    )


class StateSolver:
    """
    Решатель задачи состояния: минимизация F(u) при заданном f.

    Один экземпляр на задачу; экземпляры независимы и могут работать
    параллельно на общей сетке.
    """

    def __init__(
        self,
        mesh: Mesh,
        params: ModelParams,
        ledger: Optional[SolveLedger] = None,
        c_armijo: Optional[float] = None,
        max_halvings: Optional[int] = None,
    ):
        if params.sigma <= 0.0:
            raise InvalidArgumentError(
                "Метод Ньютона для состояния требует σ > 0 (иначе блочная система вырождена)",
                {"sigma": params.sigma},
            )
        self.mesh = mesh
        self.params = params
        self.ledger = ledger
        self.c_armijo = settings.ARMIJO_C if c_armijo is None else float(c_armijo)
        self.max_halvings = settings.ARMIJO_MAX_HALVINGS if max_halvings is None else int(max_halvings)
        self._newton_solves = 0

    def newton_step(self, u: FieldLike, mu: FieldLike, f: FieldLike, gamma: float) -> Tuple[NodalField, NodalField]:
        """
        Решает модифицированную систему Ньютона.

        Правая часть (−r_u, 0): второе уравнение однородно, так как μ
        восстанавливается через химический потенциал на каждой итерации.

        Args:
            u, mu, f: Текущая пара (u, μ) и поле подложки
            gamma: Параметр γ ∈ [0, 1]

        Returns:
            (δu, δμ)

        Raises:
            SolverFailureError: система вырождена при данном γ
        """
        if not 0.0 <= gamma <= 1.0:
            raise InvalidArgumentError(f"γ должно лежать в [0, 1], получено {gamma}")
        mesh, n = self.mesh, self.mesh.n_nodes
        u = as_values(u, mesh)
        res = residual(u, mu, f, self.params, mesh)
        operator = linearized_operator(mesh, u, self.params, gamma)
        rhs = np.concatenate([-res.r_u, np.zeros(n)])

        self._newton_solves += 1
        if self.ledger is not None:
            self.ledger.record(SolveLedger.STATE_NEWTON)
        sol = solve_sparse(operator, rhs)
        return NodalField(mesh, sol[:n], copy=False), NodalField(mesh, sol[n:], copy=False)

    def slope_floor(self, energy: float) -> float:
        """Уровень округления для наклона ⟨D_uF, δu⟩ при энергии F."""
        return settings.ENERGY_RTOL * max(abs(energy), 1.0)

    def find_descent_direction(
        self, u: FieldLike, mu: FieldLike, f: FieldLike, energy: Optional[float] = None
    ) -> Tuple[NodalField, NodalField, float, float]:
        """
        Перебор γ = 1, ½, ¼, … (ниже GAMMA_FLOOR сразу γ = 0) до направления спуска.

        Вблизи решения наклон точного шага Ньютона становится шумом округления
        и может оказаться неотрицательным. Если при γ = 1 |⟨D_uF, δu⟩| не превышает
        slope_floor(F), возвращается этот шаг: вызывающий делает его целиком (β = 1).

        Returns:
            (δu, δμ, γ, ⟨D_uF, δu⟩)
        """
        mesh = self.mesh
        u = as_values(u, mesh)
        grad = energy_gradient(u, f, self.params, mesh)
        if energy is None:
            energy = free_energy(u, f, self.params, mesh)
        floor = self.slope_floor(energy)
        gamma = 1.0
        attempts = []
        while True:
            try:
                du, dmu = self.newton_step(u, mu, f, gamma)
                slope = float(grad @ du.values)
                attempts.append({"gamma": gamma, "slope": slope})
                if np.isfinite(slope) and slope < 0.0:
                    return du, dmu, gamma, slope
                if gamma == 1.0 and np.isfinite(slope) and abs(slope) <= floor:
                    return du, dmu, gamma, slope
            except SolverFailureError as e:
                attempts.append({"gamma": gamma, "error": e.message})
                logger.debug(f"γ={gamma:g}: система Ньютона не решена ({e.message})")
            if gamma == 0.0:
                raise SolverFailureError("Направление спуска не найдено даже при γ = 0", {"attempts": attempts})
            gamma *= settings.GAMMA_FACTOR
            if gamma < settings.GAMMA_FLOOR:
                gamma = 0.0

    def armijo_search(
        self,
        u: FieldLike,
        du: FieldLike,
        f: FieldLike,
        c_armijo: Optional[float] = None,
        energy: Optional[float] = None,
        slope: Optional[float] = None,
    ) -> Tuple[float, float]:
        """
        Дробление шага β = 1, ½, … до выполнения условия Армихо.

        F(u + βδu) ≤ F(u) + c·β·⟨D_uF, δu⟩ с допуском округления ENERGY_RTOL·|F(u)|.

        Returns:
            (β_u, F(u + β_u δu))

        Raises:
            SolverFailureError: шаг не принят после max_halvings делений
        """
        mesh, p = self.mesh, self.params
        u = as_values(u, mesh)
        du = as_values(du, mesh)
        c = self.c_armijo if c_armijo is None else float(c_armijo)
        f0 = free_energy(u, f, p, mesh) if energy is None else float(energy)
        if slope is None:
            slope = float(energy_gradient(u, f, p, mesh) @ du)
        if not slope < 0.0:
            raise InvalidArgumentError("δu не является направлением спуска", {"slope": slope})

        slack = settings.ENERGY_RTOL * abs(f0)
        beta = 1.0
        for _ in range(self.max_halvings + 1):
            try:
                trial = free_energy(u + beta * du, f, p, mesh)
            except DesignError:
                trial = np.inf
            if trial <= f0 + c * beta * slope + slack:
                return beta, trial
            beta *= 0.5
        raise SolverFailureError(
            "Поиск шага Армихо исчерпан",
            {"halvings": self.max_halvings, "energy": f0, "slope": slope},
        )

    def _finish(
        self, report: StateSolveReport, u: np.ndarray, mu: np.ndarray, norm: float, tol: float, solves_before: int
    ) -> None:
        report.u = NodalField(self.mesh, u, copy=False)
        report.mu = NodalField(self.mesh, mu, copy=False)
        report.final_residual = norm
        report.converged = norm <= tol
        report.newton_solves = self._newton_solves - solves_before

    def solve_state(
        self,
        f: FieldLike,
        u0: FieldLike,
        tol: Optional[float] = None,
        max_iter: Optional[int] = None,
    ) -> StateSolveReport:
        """
        Минимизирует F(u) из начального приближения u0.

        Перед итерациями u0 сдвигается на константу так, что ∫(u0 − m) = 0;
        каждый шаг Ньютона затем сохраняет массу. Превышение max_iter
        не является ошибкой: возвращается отчёт с converged = False.

        Args:
            f: Поле подложки
            u0: Начальное приближение
            tol: Допуск на двойственную норму невязки (STATE_TOL)
            max_iter: Предел итераций (STATE_MAX_ITER)

        Returns:
            StateSolveReport с полной историей итераций

        Raises:
            StateSolveError: шаг Ньютона не найден; в ошибке отчёт по последнему принятому u
        """
        mesh, p = self.mesh, self.params
        tol = settings.STATE_TOL if tol is None else float(tol)
        max_iter = settings.STATE_MAX_ITER if max_iter is None else int(max_iter)
        f = as_values(f, mesh)
        u = as_values(u0, mesh).copy()

        drift = mesh.mean(u) - p.m
        if abs(drift) > _MASS_SHIFT_ATOL:
            u -= drift
        solves_before = self._newton_solves

        mu = chemical_potential(u, f, p, mesh).values
        norm = residual(u, mu, f, p, mesh).norm(mesh)
        energy = free_energy(u, f, p, mesh)
        report = StateSolveReport(
            u=NodalField(mesh, u, copy=False),
            mu=NodalField(mesh, mu, copy=False),
            energies=[energy],
            residuals=[norm],
        )

        while norm > tol and report.iterations < max_iter:
            try:
                du, _, gamma, slope = self.find_descent_direction(u, mu, f, energy=energy)
                if gamma == 1.0 and abs(slope) <= self.slope_floor(energy):
                    # Наклон на уровне округления: полный шаг Ньютона без поиска
                    beta = 1.0
                    energy = free_energy(u + du.values, f, p, mesh)
                    report.roundoff_steps += 1
                else:
                    beta, energy = self.armijo_search(u, du, f, energy=energy, slope=slope)
            except SolverFailureError as e:
                self._finish(report, u, mu, norm, tol, solves_before)
                logger.warning(f"Ньютон прерван на итерации {report.iterations}: {e.message} (‖B‖={norm:.3e})")
                raise StateSolveError(
                    f"Решение состояния прервано: {e.message}",
                    report,
                    {**e.detail, "iterations": report.iterations, "residual": norm},
                ) from e
            u = u + beta * du.values
            mu = chemical_potential(u, f, p, mesh).values
            norm = residual(u, mu, f, p, mesh).norm(mesh)

            report.iterations += 1
            report.energies.append(energy)
            report.residuals.append(norm)
            report.gammas.append(gamma)
            report.betas.append(beta)
            logger.debug(
                f"Ньютон {report.iterations}: γ={gamma:g} β={beta:g} F={energy:.10g} ‖B‖={norm:.3e}"
            )

        self._finish(report, u, mu, norm, tol, solves_before)

        if report.converged:
            logger.info(
                f"Состояние найдено: итераций {report.iterations}, ‖B‖={norm:.3e}, F={energy:.10g}"
            )
        else:
            logger.warning(
                f"Состояние не сошлось за {report.iterations} итераций: ‖B‖={norm:.3e} > {tol:.1e}"
            )
        return report


def solve_state(
    f: FieldLike,
    u0: FieldLike,
    p: ModelParams,
    mesh: Mesh,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    ledger: Optional[SolveLedger] = None,
) -> StateSolveReport:
    """Однократное решение задачи состояния новым экземпляром StateSolver."""
    return StateSolver(mesh, p, ledger=ledger).solve_state(f, u0, tol=tol, max_iter=max_iter)
