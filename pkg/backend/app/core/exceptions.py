"""
Иерархия ошибок библиотеки.

Каждая ошибка несёт машинный код и словарь диагностики ``detail``,
который CLI выводит в лог и в отчёт.
"""
from typing import Any, Dict, Optional


class DesignError(Exception):
    """Базовая ошибка пакета."""

    code: str = "design-error"

    def __init__(self, message: str, detail: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.detail: Dict[str, Any] = detail or {}

    def to_dict(self) -> Dict[str, Any]:
        return {"code": self.code, "message": self.message, "detail": self.detail}


class InvalidArgumentError(DesignError, ValueError):
    """Аргумент нарушает предусловие операции."""

    code = "invalid-argument"


class NumericalDomainError(DesignError, ArithmeticError):
    """Значение вне области определения (нечисловые нагрузки, совпавшие метки)."""

    code = "numerical-domain"


class SolverFailureError(DesignError, RuntimeError):
    """Линейный или нелинейный решатель не справился."""

    code = "solver-failure"


class StateSolveError(SolverFailureError):
    """Итерации Ньютона прерваны; report хранит последнее принятое приближение."""

    code = "state-solve-failure"

    def __init__(self, message: str, report: Any, detail: Optional[Dict[str, Any]] = None):
        super().__init__(message, detail)
        self.report = report


class ConfigError(DesignError):
    """Ошибка конфигурации запуска или чтения файлов."""

    code = "config-error"


__all__ = [
    "DesignError",
    "InvalidArgumentError",
    "NumericalDomainError",
    "SolverFailureError",
    "StateSolveError",
    "ConfigError",
]
