"""
Целевые морфологии u_d: периодические полоски и растры ±1.
"""
import csv
import logging
from pathlib import Path
from typing import Union

import numpy as np

from app.core.exceptions import ConfigError, InvalidArgumentError
from app.schemas.run import TargetKind, TargetSpec
from app.services.fem import Mesh, NodalField

logger = logging.getLogger(__name__)


def strip_target(mesh: Mesh, l_target: float, offset: float = 0.5, orientation: str = "vertical") -> NodalField:
    """
    Полоски ширины l_target/2: u_d = +1 при cos(2π(x − offset)/l_target) ≥ 0, иначе −1.

    При offset = 0.5 центры A-полосок лежат в 0.5 + k·l_target.
    """
    if l_target <= 0:
        raise InvalidArgumentError("Период полосок должен быть положителен", {"l_target": l_target})
    if orientation not in ("vertical", "horizontal"):
        raise InvalidArgumentError(f"Неизвестная ориентация полосок: {orientation}")
    coord = mesh.x if orientation == "vertical" else mesh.y
    values = np.where(np.cos(2.0 * np.pi * (coord - offset) / l_target) >= 0.0, 1.0, -1.0)
    return NodalField(mesh, values, copy=False)


def read_raster(path: Union[str, Path]) -> np.ndarray:
    """Читает CSV растра из ±1; первая строка - верхний край области."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [[int(float(cell)) for cell in row if cell.strip()] for row in csv.reader(fh) if row]
    except (OSError, ValueError) as e:
        raise ConfigError(f"Не удалось прочитать растр {path}: {e}", {"path": str(path)}) from e
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError("Растр должен быть прямоугольной таблицей", {"path": str(path)})
    grid = np.array(rows, dtype=float)
    if grid.shape[0] < 2 or grid.shape[1] < 2:
        raise ConfigError("Растр должен быть не меньше 2×2", {"shape": list(grid.shape)})
    if not np.all(np.isin(grid, (-1.0, 1.0))):
        raise ConfigError("Растр должен содержать только −1 и +1", {"path": str(path)})
    return grid


def raster_target(mesh: Mesh, grid: np.ndarray) -> NodalField:
    """Перенос растра на узлы ближайшей ячейкой; значения точно ±1."""
    grid = np.asarray(grid, dtype=float)
    n_rows, n_cols = grid.shape
    col = np.minimum((mesh.x / mesh.l1 * n_cols).astype(int), n_cols - 1)
    row_from_bottom = np.minimum((mesh.y / mesh.l2 * n_rows).astype(int), n_rows - 1)
    return NodalField(mesh, grid[n_rows - 1 - row_from_bottom, col], copy=False)


def build_target(mesh: Mesh, spec: TargetSpec) -> NodalField:
    if spec.kind == TargetKind.STRIPS:
        return strip_target(mesh, spec.l_target, spec.offset, spec.orientation)
    logger.info(f"Целевая морфология из растра {spec.path}")
    return raster_target(mesh, read_raster(spec.path))
