"""
Оценка устойчивости дизайна к начальным приближениям.

N независимых решений состояния при фиксированном z из случайных
начальных приближений; равновесие с минимальной энергией служит
оценкой наиболее вероятного состояния.
"""
import asyncio
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from app.core.exceptions import DesignError, InvalidArgumentError, SolverFailureError
from app.schemas.guidepost import GuidepostConfig
from app.schemas.model import FieldSamplerParams, ModelParams
from app.schemas.reports import AssessmentReport, AssessmentSample, ObjectiveStats, StateSolveReport
from app.services.energy import design_objective
from app.services.fem import FieldLike, Mesh, NodalField, as_values
from app.services.guideposts import DesignVariables, eval_substrate
from app.services.random_field import sample_initial_guess
from app.services.state_solver import StateSolver

logger = logging.getLogger(__name__)


@dataclass
class AssessmentResult:
    report: AssessmentReport
    best_state: StateSolveReport
    f: NodalField


class RobustnessAssessor:
    """
    Решает задачу состояния для N зёрен параллельно (не более jobs потоков).

    Каждая выборка получает свой экземпляр StateSolver; отчёт собирается
    в порядке зёрен и не зависит от порядка выполнения.
    """

    def __init__(
        self,
        mesh: Mesh,
        params: ModelParams,
        guideposts: GuidepostConfig,
        sampler: FieldSamplerParams,
        jobs: int = 1,
        state_tol: Optional[float] = None,
        state_max_iter: Optional[int] = None,
    ):
        if jobs < 1:
            raise InvalidArgumentError("jobs должен быть >= 1", {"jobs": jobs})
        self.mesh = mesh
        self.params = params
        self.guideposts = guideposts
        self.sampler = sampler
        self.jobs = jobs
        self.state_tol = state_tol
        self.state_max_iter = state_max_iter

    def _solve_sample(self, seed: int, f: NodalField) -> Optional[StateSolveReport]:
        fp = self.sampler.model_copy(update={"seed": seed})
        u0 = sample_initial_guess(self.mesh, self.params, fp)
        try:
            return StateSolver(self.mesh, self.params).solve_state(
                f, u0, tol=self.state_tol, max_iter=self.state_max_iter
            )
        except DesignError as e:
            logger.warning(f"Выборка seed={seed}: решение состояния прервано ({e.code}: {e.message})")
            return None

    async def _solve_all(self, seeds: List[int], f: NodalField) -> List[Optional[StateSolveReport]]:
        semaphore = asyncio.Semaphore(self.jobs)

        async def run(seed: int) -> Optional[StateSolveReport]:
            async with semaphore:
                return await asyncio.to_thread(self._solve_sample, seed, f)

        results = await asyncio.gather(*(run(seed) for seed in seeds), return_exceptions=True)
        states = []
        for seed, result in zip(seeds, results):
            if isinstance(result, BaseException):
                logger.error(f"Выборка seed={seed} завершилась ошибкой: {result}")
                states.append(None)
            else:
                states.append(result)
        return states

    def assess(self, z: DesignVariables, u_d: FieldLike, n_samples: int, base_seed: int) -> AssessmentResult:
        """
        Оценивает дизайн z по N выборкам с зёрнами base_seed..base_seed+N−1.

        Args:
            z: Положения меток
            u_d: Целевая морфология
            n_samples: Число выборок N ≥ 1
            base_seed: Первое зерно

        Returns:
            AssessmentResult с отчётом и равновесием минимальной энергии

        Raises:
            SolverFailureError: ни одна выборка не сошлась
        """
        if n_samples < 1:
            raise InvalidArgumentError("Число выборок должно быть >= 1", {"n": n_samples})
        mesh = self.mesh
        u_d = as_values(u_d, mesh)
        f = eval_substrate(z, self.guideposts, mesh)
        mesh.warm_up()

        seeds = [base_seed + i for i in range(n_samples)]
        states = asyncio.run(self._solve_all(seeds, f))

        samples: List[AssessmentSample] = []
        for seed, state in zip(seeds, states):
            if state is None:
                samples.append(AssessmentSample(seed=seed, converged=False))
                continue
            sample = AssessmentSample(
                seed=seed,
                energy=state.energy,
                objective=design_objective(state.u, u_d, mesh),
                converged=state.converged,
                iterations=state.iterations,
                final_residual=state.final_residual,
            )
            samples.append(sample)
            logger.info(
                f"Выборка seed={seed}: F={sample.energy:.10g} Q={sample.objective:.6g} "
                f"итераций {sample.iterations}{'' if sample.converged else ' (не сошлась)'}"
            )

        converged = [i for i, s in enumerate(samples) if s.converged]
        if not converged:
            raise SolverFailureError("Ни одна выборка не сошлась: дизайн непригоден", {"n": n_samples})
        unconverged = n_samples - len(converged)
        if unconverged:
            logger.warning(f"Не сошлись {unconverged} из {n_samples} выборок; исключены из статистики")

        best = min(converged, key=lambda i: (samples[i].energy, i))
        q = np.array([samples[i].objective for i in converged])
        stats = ObjectiveStats(
            mean=float(q.mean()),
            std=float(q.std(ddof=1)) if q.size > 1 else 0.0,
            min=float(q.min()),
            max=float(q.max()),
            count=int(q.size),
        )
        report = AssessmentReport(
            samples=samples,
            min_energy_index=best,
            min_energy_seed=samples[best].seed,
            stats=stats,
            unconverged=unconverged,
        )
        return AssessmentResult(report=report, best_state=states[best], f=f)


def assess(
    z: DesignVariables,
    u_d: FieldLike,
    n_samples: int,
    base_seed: int,
    mesh: Mesh,
    params: ModelParams,
    guideposts: GuidepostConfig,
    sampler: FieldSamplerParams,
    jobs: int = 1,
) -> AssessmentResult:
    return RobustnessAssessor(mesh, params, guideposts, sampler, jobs=jobs).assess(z, u_d, n_samples, base_seed)
