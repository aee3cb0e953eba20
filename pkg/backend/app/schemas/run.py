"""
Схема конфигурации запуска (TOML или JSON).

Секции файла соответствуют вложенным моделям RunConfig:
[mesh], [model], [guideposts], [optimizer], [optimizer.penalty],
[sampler], [target], [sweep], [assess].
"""
from enum import Enum
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import Field, field_validator, model_validator

from .base import ParamsModel
from .guidepost import GuidepostConfig
from .model import FieldSamplerParams, ModelParams
from .optimizer import OptimizerConfig


class MeshSpec(ParamsModel):
    """Прямоугольная область и разрешение сетки."""

    l1: float = Field(3.0, gt=0, description="Длина по x1")
    l2: float = Field(3.0, gt=0, description="Длина по x2")
    nx: Optional[int] = Field(None, ge=1)
    ny: Optional[int] = Field(None, ge=1)
    h: Optional[float] = Field(None, gt=0, description="Шаг сетки (по умолчанию ε/2)")

    @model_validator(mode="after")
    def check_counts(self) -> "MeshSpec":
        if (self.nx is None) != (self.ny is None):
            raise ValueError("nx и ny задаются вместе")
        if self.nx is not None and self.h is not None:
            raise ValueError("задайте либо nx/ny, либо h")
        return self


class TargetKind(str, Enum):
    STRIPS = "strips"
    RASTER = "raster"


class TargetSpec(ParamsModel):
    """Целевая морфология: полоски или растр ±1."""

    kind: TargetKind = TargetKind.STRIPS
    l_target: float = Field(1.0, gt=0, description="Период полосок")
    offset: float = Field(0.5, description="Центр первой A-полоски")
    orientation: Literal["vertical", "horizontal"] = "vertical"
    path: Optional[Path] = Field(None, description="CSV растра (первая строка - верхний край)")

    @model_validator(mode="after")
    def check_raster(self) -> "TargetSpec":
        if self.kind == TargetKind.RASTER and self.path is None:
            raise ValueError("для растровой цели нужен path")
        return self


class SweepSpec(ParamsModel):
    """Развёртка по шагу l_s равноотстоящих полосок."""

    l_s_min: float = Field(1.6, gt=0)
    l_s_max: float = Field(3.4, gt=0)
    step: float = Field(0.05, gt=0)
    left: float = Field(0.5, description="Положение левой метки")
    mode: Literal["continuation", "fixed"] = "continuation"

    @model_validator(mode="after")
    def check_range(self) -> "SweepSpec":
        if self.l_s_max < self.l_s_min:
            raise ValueError("l_s_max меньше l_s_min")
        ratio = (self.l_s_max - self.l_s_min) / self.step
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError("Диапазон l_s_max − l_s_min должен быть кратен step")
        return self


class AssessSpec(ParamsModel):
    """Параметры оценки устойчивости."""

    n_samples: int = Field(20, ge=1)
    design_path: Optional[Path] = Field(None, description="CSV дизайна (index,shape,r1[,r2])")


class RunConfig(ParamsModel):
    """Полная конфигурация команды CLI."""

    mesh: MeshSpec = Field(default_factory=MeshSpec)
    model: ModelParams = Field(default_factory=ModelParams)
    guideposts: GuidepostConfig = Field(default_factory=GuidepostConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    sampler: FieldSamplerParams = Field(default_factory=FieldSamplerParams)
    target: TargetSpec = Field(default_factory=TargetSpec)
    sweep: SweepSpec = Field(default_factory=SweepSpec)
    assess: AssessSpec = Field(default_factory=AssessSpec)
    initial_design: Optional[List[float]] = Field(None, description="z0; по умолчанию равномерная расстановка")
    homogeneous_start: bool = Field(False, description="simulate: u⁽⁰⁾ ≡ m вместо случайного поля")
    output_dir: Optional[Path] = None
    jobs: Optional[int] = Field(None, ge=1)

    @field_validator("initial_design")
    @classmethod
    def check_design(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        if v is not None and not v:
            raise ValueError("initial_design не может быть пустым")
        return v

    @model_validator(mode="after")
    def check_design_length(self) -> "RunConfig":
        if self.initial_design is not None and len(self.initial_design) != self.guideposts.n_design:
            raise ValueError(
                f"initial_design: ожидалось {self.guideposts.n_design} координат, "
                f"получено {len(self.initial_design)}"
            )
        return self
