#!/usr/bin/env python3
"""
Генератор растровых целевых морфологий "junction" и "jog".

Область [0, L]×[0, 7L/6]; значения ячеек ±1, первая строка CSV -
верхний край области. Геометрия приближённая: для точной формы
подставьте собственный растр.

Использование:
    python -m scripts.generate_targets junction --out targets/junction.csv
    python -m scripts.generate_targets jog --length 3 --period 1 --cols 180 --out targets/jog.csv
"""
import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

logger = logging.getLogger("dsa-design.targets")


def cell_centres(length: float, cols: int):
    """Центры ячеек растра; строки идут сверху вниз."""
    height = 7.0 * length / 6.0
    rows = max(2, int(round(cols * 7.0 / 6.0)))
    x = (np.arange(cols) + 0.5) * length / cols
    y = height - (np.arange(rows) + 0.5) * height / rows
    return np.meshgrid(x, y, indexing="xy")


def lamellae(distance: np.ndarray, period: float) -> np.ndarray:
    return np.where(np.cos(2.0 * np.pi * distance / period) >= 0.0, 1, -1)


def junction(length: float, period: float, cols: int) -> np.ndarray:
    """Вложенные уголки: вертикальные полосы внизу переходят в горизонтальные у правого края."""
    X, Y = cell_centres(length, cols)
    return lamellae(np.maximum(length - X, Y), period)


def jog(length: float, period: float, cols: int) -> np.ndarray:
    """Горизонтальные полосы со сдвигом на полпериода в средней трети по x."""
    X, Y = cell_centres(length, cols)
    t = np.clip((X - length / 3.0) / (length / 3.0), 0.0, 1.0)
    shift = 0.5 * period * t * t * (3.0 - 2.0 * t)
    return lamellae(Y - shift, period)


GENERATORS = {"junction": junction, "jog": jog}


def write_raster(path: Path, grid: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        csv.writer(fh).writerows(grid.tolist())


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("kind", choices=sorted(GENERATORS))
    parser.add_argument("--length", type=float, default=3.0, help="L (ширина области)")
    parser.add_argument("--period", type=float, default=1.0, help="Период полос")
    parser.add_argument("--cols", type=int, default=120, help="Число столбцов растра")
    parser.add_argument("--out", type=Path, required=True)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    if args.length <= 0 or args.period <= 0 or args.cols < 2:
        logger.error("length и period должны быть положительны, cols >= 2")
        return 1
    grid = GENERATORS[args.kind](args.length, args.period, args.cols)
    write_raster(args.out, grid)
    logger.info(f"{args.kind}: растр {grid.shape[0]}×{grid.shape[1]} записан в {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
