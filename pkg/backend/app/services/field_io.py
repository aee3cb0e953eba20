"""
Экспорт и импорт: поля, сетка, дизайн, журналы, конфигурация запуска.

JSON/JSONL пишутся через orjson; CSV используют repr чисел,
поэтому экспорт и обратное чтение поля совпадают побитово.
"""
import csv
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Union

import numpy as np
import orjson
from pydantic import BaseModel, ValidationError

from app.core.exceptions import ConfigError
from app.schemas.base import dump_json
from app.schemas.guidepost import GuidepostShape
from app.schemas.reports import SweepRow
from app.schemas.run import RunConfig
from app.services.fem import FieldLike, Mesh, NodalField, as_values
from app.services.guideposts import DesignVariables

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS


def _to_jsonable(obj: Any) -> Any:
    if isinstance(obj, BaseModel):
        return dump_json(obj)
    return obj


def write_json(path: PathLike, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(orjson.dumps(_to_jsonable(obj), option=_JSON_OPTIONS))
    return path


def read_json(path: PathLike) -> Any:
    return orjson.loads(Path(path).read_bytes())


class JsonlWriter:
    """Построчная запись JSONL (по записи на строку, сброс после каждой)."""

    def __init__(self, path: PathLike):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("wb")

    def write(self, record: Any) -> None:
        self._fh.write(orjson.dumps(_to_jsonable(record), option=orjson.OPT_SERIALIZE_NUMPY))
        self._fh.write(b"\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "JsonlWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_jsonl(path: PathLike) -> List[Dict[str, Any]]:
    with Path(path).open("rb") as fh:
        return [orjson.loads(line) for line in fh if line.strip()]


def write_field_csv(path: PathLike, field: FieldLike, mesh: Mesh) -> Path:
    """Поле как CSV `x,y,value`, строка на узел в порядке нумерации."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = as_values(field, mesh)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "value"])
        for (x, y), v in zip(mesh.nodes, values):
            writer.writerow([repr(float(x)), repr(float(y)), repr(float(v))])
    return path


def read_field_csv(path: PathLike, mesh: Mesh) -> NodalField:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            values = [float(row["value"]) for row in reader]
    except (OSError, KeyError, ValueError) as e:
        raise ConfigError(f"Не удалось прочитать поле {path}: {e}", {"path": str(path)}) from e
    if len(values) != mesh.n_nodes:
        raise ConfigError(
            "Число строк поля не совпадает с сеткой",
            {"path": str(path), "rows": len(values), "nodes": mesh.n_nodes},
        )
    return NodalField(mesh, np.array(values), copy=False)


def write_mesh_csv(directory: PathLike, mesh: Mesh) -> None:
    """nodes.csv (id,x,y) и elements.csv (id,n0,n1,n2)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with (directory / "nodes.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x", "y"])
        for i, (x, y) in enumerate(mesh.nodes):
            writer.writerow([i, repr(float(x)), repr(float(y))])
    with (directory / "elements.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "n0", "n1", "n2"])
        for i, tri in enumerate(mesh.elements):
            writer.writerow([i, *map(int, tri)])


def write_design_csv(path: PathLike, z: DesignVariables) -> Path:
    """Дизайн как CSV `index,shape,r1[,r2]`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["index", "shape", "r1"] + (["r2"] if z.dim == 2 else [])
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, pos in enumerate(z.positions):
            writer.writerow([i, z.shape.value, *(repr(float(c)) for c in pos)])
    return path


def read_design_csv(path: PathLike) -> DesignVariables:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError("файл пуст")
        shapes = {row["shape"] for row in rows}
        if len(shapes) != 1:
            raise ValueError(f"смешанные формы меток: {sorted(shapes)}")
        shape = GuidepostShape(shapes.pop())
        rows.sort(key=lambda row: int(row["index"]))
        if shape == GuidepostShape.CIRCLE:
            coords = [[float(row["r1"]), float(row["r2"])] for row in rows]
        else:
            coords = [[float(row["r1"])] for row in rows]
    except (OSError, KeyError, ValueError) as e:
        raise ConfigError(f"Не удалось прочитать дизайн {path}: {e}", {"path": str(path)}) from e
    return DesignVariables.from_positions(coords, shape)


def write_sweep_csv(path: PathLike, rows: Iterable[SweepRow]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["l_s", "Q", "P_repel", "J", "converged", "iterations"])
        for row in rows:
            writer.writerow(
                [repr(row.l_s), repr(row.Q), repr(row.P_repel), repr(row.J), int(row.converged), row.iterations]
            )
    return path


def format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return "; ".join(lines)


def _resolve(base: Path, value: Any) -> Any:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else (base / p)


def load_run_config(path: PathLike) -> RunConfig:
    """
    Читает конфигурацию запуска из TOML или JSON (по расширению).

    Относительные пути в target.path, assess.design_path и output_dir отсчитываются
    от каталога конфигурации.

    Raises:
        ConfigError: файл не читается, не проходит валидацию или ссылается на отсутствующие файлы
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ConfigError(f"Не удалось открыть конфигурацию {path}: {e}", {"path": str(path)}) from e

    try:
        if path.suffix.lower() == ".json":
            data = orjson.loads(raw)
        elif path.suffix.lower() == ".toml":
            data = tomllib.loads(raw.decode("utf-8"))
        else:
            raise ConfigError(f"Неизвестный формат конфигурации: {path.suffix}", {"path": str(path)})
    except (orjson.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"Синтаксическая ошибка в {path}: {e}", {"path": str(path)}) from e

    if not isinstance(data, dict):
        raise ConfigError("Конфигурация должна быть объектом", {"path": str(path)})
    base = path.parent
    if data.get("output_dir") is not None:
        data["output_dir"] = str(_resolve(base, data["output_dir"]))
    for section, key in (("target", "path"), ("assess", "design_path")):
        if isinstance(data.get(section), dict) and data[section].get(key) is not None:
            data[section][key] = str(_resolve(base, data[section][key]))

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Некорректная конфигурация {path}: {format_validation_error(e)}",
                          {"path": str(path), "errors": e.errors(include_url=False)}) from e

    for ref in (config.target.path, config.assess.design_path):
        if ref is not None and not Path(ref).is_file():
            raise ConfigError(f"Файл не найден: {ref}", {"path": str(ref)})
    return config
