"""
Модуль логирования для приложения.
"""
import logging
import sys
from typing import Optional

from pythonjsonlogger import jsonlogger

from app.core.config import settings

TEXT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
JSON_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"

# Создаем логгер
logger = logging.getLogger(settings.PROJECT_NAME)


def setup_logging(level: Optional[str] = None, json: Optional[bool] = None) -> logging.Logger:
    """
    Настраивает логгер проекта и иерархию ``app``.

    Args:
        level: Уровень логирования (по умолчанию из настроек)
        json: Писать записи в JSON (по умолчанию из настроек)

    Returns:
        Логгер проекта
    """
    level = (level or settings.LOG_LEVEL).upper()
    use_json = settings.LOG_JSON if json is None else json

    # Создаем обработчик для вывода в консоль
    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(level)
    if use_json:
        handler.setFormatter(jsonlogger.JsonFormatter(JSON_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(TEXT_FORMAT))

    for name in (settings.PROJECT_NAME, "app"):
        target = logging.getLogger(name)
        target.setLevel(level)
        target.handlers.clear()
        target.addHandler(handler)
        target.propagate = False

    return logger


# Экспортируем логгер
__all__ = ["logger", "setup_logging"]
