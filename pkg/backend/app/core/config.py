from pathlib import Path

from dotenv import load_dotenv
from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

# Загружаем переменные окружения из .env файла
load_dotenv()


class Settings(BaseSettings):
    # Настройки приложения
    PROJECT_NAME: str = "dsa-design"

    # Логирование
    LOG_LEVEL: str = "INFO"
    LOG_JSON: bool = False

    # Каталог результатов и параллелизм
    OUTPUT_DIR: Path = Path("./runs")
    DEFAULT_JOBS: int = 1

    # Решатель состояния (энергетически устойчивый Ньютон)
    STATE_TOL: float = 1e-8
    STATE_MAX_ITER: int = 500
    ARMIJO_C: float = 1e-4
    ARMIJO_MAX_HALVINGS: int = 40
    GAMMA_FACTOR: float = 0.5
    GAMMA_FLOOR: float = 1e-3
    ENERGY_RTOL: float = 1e-13  # допуск на округление в условии Армихо

    # Линейная алгебра
    SOLVER_RESIDUAL_RTOL: float = 1e-10
    MASS_COMPAT_RTOL: float = 1e-8

    # Оптимизатор: порог невязки, при котором несошедшееся состояние ещё принимается
    SALVAGE_RESIDUAL: float = 1e-4

    # Валидация уровня логирования
    @field_validator("LOG_LEVEL", mode="before")
    @classmethod
    def normalize_log_level(cls, v: str) -> str:
        if isinstance(v, str):
            v = v.strip().upper()
        if v not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Неизвестный уровень логирования: {v}")
        return v

    @field_validator("DEFAULT_JOBS")
    @classmethod
    def check_jobs(cls, v: int) -> int:
        if v < 1:
            raise ValueError("DEFAULT_JOBS должен быть >= 1")
        return v

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )


# Создаем экземпляр настроек
settings = Settings()
