"""
Схемы физических параметров модели и распределения начальных приближений.
"""
from pydantic import Field, field_validator

from .base import ParamsModel


class ModelParams(ParamsModel):
    """Параметры функционала Ohta–Kawasaki."""

    eps: float = Field(0.08, gt=0, description="Ширина межфазной границы ε")
    sigma: float = Field(12.8, ge=0, description="Сила нелокального члена σ")
    m: float = Field(0.0, description="Средняя концентрация m, |m| < 1")

    @field_validator("m")
    @classmethod
    def check_mass(cls, v: float) -> float:
        if not -1.0 < v < 1.0:
            raise ValueError("средняя концентрация m должна лежать в (-1, 1)")
        return v


class FieldSamplerParams(ParamsModel):
    """Параметры гауссова поля для начальных приближений u0 = m + s·erf(ξ)."""

    delta_G: float = Field(0.8, gt=0, description="Коэффициент δ_G ковариации")
    gamma_G: float = Field(0.02, gt=0, description="Коэффициент γ_G ковариации")
    s: float = Field(1.0, ge=0, description="Масштаб возмущения")
    seed: int = Field(0, ge=0, lt=2**64, description="Зерно генератора (64 бита)")

    @property
    def correlation_length(self) -> float:
        return (self.gamma_G / self.delta_G) ** 0.5
