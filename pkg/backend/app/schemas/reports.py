"""
Схемы отчётов: решение задачи состояния, оценка устойчивости, развёртка.
"""
from typing import List, Optional

from pydantic import Field

from app.services.fem import NodalField

from .base import BaseModel


class StateSolveReport(BaseModel):
    """Результат энергетически устойчивого метода Ньютона."""

    u: NodalField = Field(..., exclude=True)
    mu: NodalField = Field(..., exclude=True)
    iterations: int = 0
    newton_solves: int = Field(0, description="Решённых модифицированных систем (вкл. перебор γ)")
    energies: List[float] = Field(default_factory=list)
    residuals: List[float] = Field(default_factory=list)
    gammas: List[float] = Field(default_factory=list)
    betas: List[float] = Field(default_factory=list)
    roundoff_steps: int = Field(0, description="Полных шагов Ньютона при наклоне на уровне округления")
    final_residual: float = 0.0
    converged: bool = False

    @property
    def energy(self) -> float:
        return self.energies[-1]


class AssessmentSample(BaseModel):
    """Одна выборка оценки устойчивости."""

    seed: int
    energy: Optional[float] = None
    objective: Optional[float] = None
    converged: bool = False
    iterations: int = 0
    final_residual: float = 0.0


class ObjectiveStats(BaseModel):
    """Выборочные статистики Q по сошедшимся выборкам."""

    mean: float
    std: float
    min: float
    max: float
    count: int


class AssessmentReport(BaseModel):
    """Отчёт об устойчивости оптимального дизайна к начальным приближениям."""

    samples: List[AssessmentSample]
    min_energy_index: int
    min_energy_seed: int
    stats: ObjectiveStats
    unconverged: int = 0


class SweepRow(BaseModel):
    """Строка развёртки по шагу полосок l_s."""

    l_s: float
    Q: float
    P_repel: float
    J: float
    converged: bool = True
    iterations: int = 0
