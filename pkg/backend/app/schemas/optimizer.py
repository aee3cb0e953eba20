"""
Схемы оптимизатора: параметры неточного метода Ньютона–КГ и журнал итераций.
"""
from enum import Enum
from typing import Dict, List, Literal, Optional

from pydantic import Field

from .base import BaseModel, ParamsModel
from .guidepost import PenaltyParams


class CGStatus(str, Enum):
    """Причина остановки метода сопряжённых градиентов."""
    CONVERGED = "converged"
    NEGATIVE_CURVATURE = "negative_curvature"
    MAX_ITER = "max_iter"


class StopReason(str, Enum):
    """Причина остановки внешнего цикла."""
    GRADIENT_TOLERANCE = "gradient_tolerance"
    MAX_OUTER = "max_outer"


class OptimizerConfig(ParamsModel):
    """Параметры внешнего цикла оптимизации положений меток."""

    l_max: float = Field(0.2, gt=0, description="Предел шага в ∞-норме")
    g_tol: float = Field(1e-6, gt=0, description="Допуск на ‖∇J‖₂")
    max_outer: int = Field(500, ge=0, description="Предел внешних итераций")
    cg_max: int = Field(50, ge=1, description="Предел итераций КГ")
    cg_rtol: Optional[float] = Field(None, gt=0, lt=1, description="Фиксированный допуск КГ вместо forcing term")
    penalty: PenaltyParams = Field(default_factory=PenaltyParams)
    use_objective: bool = Field(True, description="False - оптимизировать только штрафы")
    initial_state: Literal["sample", "homogeneous"] = Field(
        "sample", description="Начальное приближение первого решения состояния"
    )
    # None - значения из настроек (STATE_TOL, STATE_MAX_ITER, SALVAGE_RESIDUAL)
    state_tol: Optional[float] = Field(None, gt=0)
    state_max_iter: Optional[int] = Field(None, ge=1)
    salvage_residual: Optional[float] = Field(None, gt=0, description="Порог невязки для несошедшегося состояния")
    snapshot_every: int = Field(0, ge=0, description="Снимки полей каждые k итераций (0 - выкл.)")


class OptIterationRecord(BaseModel):
    """Запись одной внешней итерации (k = 0 - начальная точка)."""

    k: int
    J: float
    Q: float
    P: float
    grad_norm: float
    cg_iters: int = 0
    cg_status: Optional[CGStatus] = None
    inner_iters: int = 0
    newton_solves: int = 0
    gammas: List[float] = Field(default_factory=list)
    beta_z: Optional[float] = None
    state_converged: bool = True
    state_residual: float = 0.0
    z: List[float] = Field(default_factory=list)

    def trace_row(self) -> Dict[str, object]:
        """Поля одной строки JSONL-журнала."""
        return self.model_dump(mode="json")


class OptTrace(BaseModel):
    """Журнал оптимизации и учёт линейных решений."""

    records: List[OptIterationRecord] = Field(default_factory=list)
    converged: bool = False
    stop_reason: Optional[StopReason] = None
    solve_counts: Dict[str, int] = Field(default_factory=dict)
    solve_identity_holds: bool = True

    @property
    def iterations(self) -> int:
        return max(0, len(self.records) - 1)

    @property
    def total_inner_iters(self) -> int:
        return sum(r.inner_iters for r in self.records)
