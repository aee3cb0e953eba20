from typing import Any, Dict

from pydantic import BaseModel as PydanticBaseModel
from pydantic import ConfigDict


class BaseModel(PydanticBaseModel):
    """Базовая схема для всех моделей."""

    model_config = ConfigDict(
        arbitrary_types_allowed=True,
        extra="forbid",
    )


class ParamsModel(BaseModel):
    """Базовая схема неизменяемых наборов параметров."""

    model_config = ConfigDict(frozen=True, extra="forbid")


def dump_json(model: PydanticBaseModel, **kwargs: Any) -> Dict[str, Any]:
    """Словарь, пригодный для сериализации в JSON."""
    return model.model_dump(mode="json", **kwargs)
