import logging
import re
from pathlib import Path

import orjson
from pydantic import ValidationError

from mhaudit.domains.common.exceptions import MalformedTaxonomyError, UnknownDataTypeError
from mhaudit.domains.common.jsonio import read_packaged
from .schemas import Taxonomy, TaxonomyEntry, TypeInfo

logger = logging.getLogger(__name__)

DEFAULT_TAXONOMY_FILE = "taxonomy.json"

_CAMEL_BOUNDARY = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


def _enum_value(name: object) -> object:
    """Accept both 'BodyMeasurements' and 'body_measurements' spellings."""
    if not isinstance(name, str):
        return name
    return _CAMEL_BOUNDARY.sub("_", name.strip()).lower()


def parse_taxonomy(raw: bytes) -> Taxonomy:
    """Parse and validate a taxonomy document (JSON array of {id, category, label, name})."""
    try:
        document = orjson.loads(raw)
    except orjson.JSONDecodeError as e:
        raise MalformedTaxonomyError(f"taxonomy is not valid JSON: {e}")
    if not isinstance(document, list):
        raise MalformedTaxonomyError("taxonomy must be a top-level array")

    entries = []
    for position, item in enumerate(document):
        if not isinstance(item, dict):
            raise MalformedTaxonomyError(f"entry {position} is not an object")
        item = {**item, "category": _enum_value(item.get("category")), "label": _enum_value(item.get("label"))}
        item.setdefault("name", item.get("id"))
        try:
            entries.append(TaxonomyEntry.model_validate(item))
        except ValidationError as e:
            raise MalformedTaxonomyError(f"entry {position}: {e.errors()[0]['msg']}")
    try:
        return Taxonomy(entries=tuple(entries))
    except ValidationError as e:
        raise MalformedTaxonomyError(e.errors()[0]["msg"])


def load_taxonomy(file: Path) -> Taxonomy:
    taxonomy = parse_taxonomy(Path(file).read_bytes())
    logger.debug("Loaded %d data types from %s", len(taxonomy.entries), file)
    return taxonomy


def load_default_taxonomy() -> Taxonomy:
    return parse_taxonomy(read_packaged(DEFAULT_TAXONOMY_FILE))


def lookup(taxonomy: Taxonomy, data_type_id: str) -> TypeInfo:
    """Return (category, specificity, label) for a known data type id."""
    entry = taxonomy.entry(data_type_id)
    if entry is None:
        raise UnknownDataTypeError(f"Unknown data type {data_type_id!r}")
    return TypeInfo(entry.category, entry.specificity, entry.label)
