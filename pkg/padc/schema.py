"""Validated, immutable model base for every configuration object."""
from __future__ import annotations

import hashlib
from typing import Any, TypeVar

from pydantic import BaseModel, ConfigDict, ValidationError

from .errors import ConfigurationError

M = TypeVar("M", bound="PadcModel")


class PadcModel(BaseModel):
    """pydantic model that reports invalid input as ``ConfigurationError``."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    def __init__(self, **data: Any) -> None:
        try:
            super().__init__(**data)
        except ValidationError as exc:
            raise ConfigurationError(f"invalid {type(self).__name__}: {exc}") from exc


def with_updates(model: M, **updates: Any) -> M:
    """Copy ``model`` with ``updates`` applied, re-running validation."""
    data = model.model_dump()
    excluded = [name for name, info in type(model).model_fields.items() if info.exclude]
    data.update({name: getattr(model, name) for name in excluded})
    data.update(updates)
    return type(model)(**data)


def config_hash(model: BaseModel) -> str:
    digest = hashlib.sha256(model.model_dump_json().encode("utf-8"))
    return digest.hexdigest()[:16]
