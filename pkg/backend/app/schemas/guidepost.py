"""
Схемы меток.

Pydantic-модели функции формы меток и штрафных слагаемых.
"""
from enum import Enum

from pydantic import Field

from .base import ParamsModel


class GuidepostShape(str, Enum):
    """Форма метки."""
    CIRCLE = "circle"
    STRIP = "strip"


class GuidepostConfig(ParamsModel):
    """Схема параметризации поля подложки метками."""
    shape: GuidepostShape = Field(GuidepostShape.STRIP, description="circle или strip")
    w: float = Field(0.5, ge=0, description="Сила притягивающей метки")
    b: float = Field(0.2, gt=0, description="Ширина функции формы")
    count: int = Field(4, ge=1, description="Число меток N_p")
    c_s: float = Field(0.75, gt=0, description="Константа затухания (только для весов по x3)")
    thin_film: bool = Field(True, description="τ = 1 (приближение тонкой плёнки)")

    @property
    def dim(self) -> int:
        """Координат на одну метку."""
        return 2 if self.shape == GuidepostShape.CIRCLE else 1

    @property
    def n_design(self) -> int:
        return self.dim * self.count


class PenaltyParams(ParamsModel):
    """Схема штрафов отталкивания и стенок."""
    alpha: float = Field(1e3, ge=0, description="Сила отталкивания")
    a1: float = Field(10.0, gt=0, description="Крутизна стенок по x1")
    a2: float = Field(10.0, gt=0, description="Крутизна стенок по x2")
    enabled: bool = Field(True, description="Добавлять штрафы к стоимости")
