"""
Точка входа командной строки dsa-design.

Использование:
    dsa-design simulate --config run.toml [--seed N] [--out DIR]
    dsa-design optimize --config run.toml [--seed N] [--out DIR]
    dsa-design assess   --config run.toml [--seed N] [--jobs N] [--out DIR]
    dsa-design sweep    --config run.toml [--out DIR]

Коды выхода:
    0 - успех (optimize: ‖∇J‖ ≤ g_tol)
    1 - ошибка конфигурации или решателя
    2 - optimize исчерпал max_outer
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from app.core.config import settings
from app.core.exceptions import DesignError
from app.core.logging import setup_logging
from app.services.field_io import load_run_config
from app.services.runner import COMMANDS, EXIT_ERROR, apply_overrides

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsa-design",
        description="Равновесные морфологии блок-сополимеров и оптимизация положений меток",
    )
    parser.add_argument("--log-level", default=None, help=f"Уровень логирования (по умолчанию {settings.LOG_LEVEL})")
    parser.add_argument("--log-json", action="store_true", default=None, help="Логи в формате JSON")

    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, handler in COMMANDS.items():
        sub = subparsers.add_parser(name, help=(handler.__doc__ or "").strip().splitlines()[0])
        sub.add_argument("--config", required=True, type=Path, help="Файл конфигурации (TOML или JSON)")
        sub.add_argument("--seed", type=int, default=None, help="Зерно генератора начальных приближений")
        sub.add_argument("--jobs", type=int, default=None, help="Число потоков для assess")
        sub.add_argument("--out", type=Path, default=None, help="Каталог результатов")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Разбирает аргументы, запускает команду и возвращает код выхода."""
    args = build_parser().parse_args(argv)
    setup_logging(level=args.log_level, json=args.log_json)

    try:
        config = load_run_config(args.config)
        config = apply_overrides(config, seed=args.seed, jobs=args.jobs, out=args.out)
        return COMMANDS[args.command](config)
    except DesignError as e:
        logger.error(f"{args.command}: {e.message}", extra={"code": e.code, "detail": e.detail})
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
