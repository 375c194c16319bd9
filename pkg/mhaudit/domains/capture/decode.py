"""Decoded text views over a request: raw, percent-decoded, form, JSON and multipart."""

import logging
from urllib.parse import parse_qsl, unquote, unquote_plus

import orjson
from requests_toolbelt.multipart.decoder import (
    ImproperBodyPartContentException,
    MultipartDecoder,
    NonMultipartContentTypeException,
)

from mhaudit.domains.common.enums import HitLocation, ViewKind
from .schemas import DecodedViews, FlowRecord, View

logger = logging.getLogger(__name__)

MAX_NESTED_DEPTH = 2

_FORM_TYPE = "application/x-www-form-urlencoded"
_MULTIPART_TYPE = "multipart/form-data"


def _json_scalars(value, prefix: str = ""):
    """Yield (key_path, text) for every string and number scalar."""
    if isinstance(value, dict):
        for key, item in value.items():
            yield from _json_scalars(item, f"{prefix}.{key}" if prefix else str(key))
    elif isinstance(value, list):
        for index, item in enumerate(value):
            yield from _json_scalars(item, f"{prefix}.{index}" if prefix else str(index))
    elif isinstance(value, bool) or value is None:
        return
    elif isinstance(value, (int, float)):
        yield prefix, str(value)
    elif isinstance(value, str):
        yield prefix, value


def _parse_json(text: str):
    stripped = text.strip()
    if not stripped or stripped[0] not in "{[":
        return None
    try:
        return orjson.loads(stripped)
    except orjson.JSONDecodeError:
        return None


def _looks_like_form(text: str) -> bool:
    return "=" in text and not text.lstrip().startswith(("{", "["))


def _field_views(
    key: str,
    text: str,
    kind: ViewKind,
    provenance: str,
    depth: int,
) -> list[View]:
    """A decoded field plus whatever is nested inside its value."""
    views = [View(view_kind=kind, text=text, location=HitLocation.BODY, provenance=provenance, key=key)]
    if depth >= MAX_NESTED_DEPTH:
        return views
    nested = _parse_json(text)
    if nested is not None:
        for sub_key, sub_text in _json_scalars(nested, key):
            views += _field_views(sub_key, sub_text, ViewKind.JSON_STRINGS, f"{provenance}>json:{sub_key}", depth + 1)
    elif "%" in text or "+" in text:
        decoded = unquote_plus(text)
        if decoded != text:
            views.append(View(
                view_kind=ViewKind.URL_DECODED,
                text=decoded,
                location=HitLocation.BODY,
                provenance=f"{provenance}>url",
                key=key,
            ))
    return views


def _form_views(text: str, provenance: str, depth: int) -> list[View]:
    views = []
    for key, value in parse_qsl(text, keep_blank_values=True):
        views += _field_views(key, value, ViewKind.FORM_FIELDS, f"{provenance}.form:{key}", depth)
    return views


def _json_views(document, provenance: str, depth: int) -> list[View]:
    views = []
    for key, text in _json_scalars(document):
        views += _field_views(key, text, ViewKind.JSON_STRINGS, f"{provenance}.json:{key}", depth)
    return views


def _part_name(part) -> str:
    disposition = part.headers.get(b"Content-Disposition", b"").decode("utf-8", errors="replace")
    for item in disposition.split(";"):
        item = item.strip()
        if item.startswith("name="):
            return item[5:].strip('"')
    return ""


def _multipart_views(flow: FlowRecord, depth: int) -> list[View]:
    try:
        decoder = MultipartDecoder(flow.request_body, flow.header("content-type") or "")
    except (ImproperBodyPartContentException, NonMultipartContentTypeException, ValueError) as e:
        logger.debug("%s: multipart body not parsed: %s", flow.flow_id, e)
        return []
    views = []
    for index, part in enumerate(decoder.parts):
        name = _part_name(part) or str(index)
        text = part.content.decode("utf-8", errors="replace")
        views += _field_views(name, text, ViewKind.MULTIPART_PARTS, f"body.part:{name}", depth)
    return views


def decode_body(flow: FlowRecord) -> DecodedViews:
    """All text views searched by the detector; parse failures just omit a view."""
    body_text = flow.request_body.decode("utf-8", errors="replace")
    views = [View(view_kind=ViewKind.RAW_TEXT, text=body_text, location=HitLocation.BODY, provenance="body")]

    content_type = flow.content_type
    if _FORM_TYPE in content_type or (not content_type and _looks_like_form(body_text)):
        views += _form_views(body_text, "body", depth=1)

    document = _parse_json(body_text)
    if document is not None:
        views += _json_views(document, "body", depth=1)

    if _MULTIPART_TYPE in content_type:
        views += _multipart_views(flow, depth=1)

    # path and query: percent-decoded text kept verbatim, no speculative expansion
    if flow.path:
        views.append(View(
            view_kind=ViewKind.URL_DECODED,
            text=unquote(flow.path),
            location=HitLocation.PATH,
            provenance="path",
        ))
    if flow.query:
        views.append(View(
            view_kind=ViewKind.URL_DECODED,
            text=unquote_plus(flow.query),
            location=HitLocation.QUERY,
            provenance="query",
        ))
        for key, value in parse_qsl(flow.query, keep_blank_values=True):
            views.append(View(
                view_kind=ViewKind.FORM_FIELDS,
                text=value,
                location=HitLocation.QUERY,
                provenance=f"query.form:{key}",
                key=key,
            ))
    return DecodedViews(flow_id=flow.flow_id, views=tuple(views))
