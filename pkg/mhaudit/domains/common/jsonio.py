"""Stable JSON/JSONL helpers on top of orjson."""

from importlib import resources
from pathlib import Path
from typing import Any

import orjson
from pydantic import BaseModel

_DUMP_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2 | orjson.OPT_NON_STR_KEYS


def _default(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Type is not JSON serializable: {type(value).__name__}")


def dumps(value: Any) -> bytes:
    """Serialize with sorted keys and a trailing newline so output bytes are stable."""
    return orjson.dumps(value, default=_default, option=_DUMP_OPTIONS) + b"\n"


def dumps_line(value: Any) -> bytes:
    return orjson.dumps(value, default=_default, option=orjson.OPT_SORT_KEYS) + b"\n"


def write_json(path: Path, value: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(value))


def read_json(path: Path) -> Any:
    return orjson.loads(Path(path).read_bytes())


def read_jsonl(path: Path) -> list[Any]:
    rows = []
    for line in Path(path).read_bytes().splitlines():
        if line.strip():
            rows.append(orjson.loads(line))
    return rows


def read_packaged(name: str) -> bytes:
    """Read a file shipped in mhaudit/data."""
    return resources.files("mhaudit.data").joinpath(name).read_bytes()
