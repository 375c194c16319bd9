import base64
import binascii
import gzip
import logging
import zlib
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional
from urllib.parse import urlsplit

import orjson
import zstandard
from pydantic import ValidationError

from mhaudit.domains.common.enums import CrawlKind
from mhaudit.domains.common.exceptions import (
    InvalidHostnameError,
    MalformedEntryError,
    UnknownCaptureFormatError,
    UnreadableArtifactError,
)
from mhaudit.domains.hostclass.service import normalize_hostname
from .schemas import CaptureLog, FlowRecord

logger = logging.getLogger(__name__)

DEFAULT_PORTS = {"http": 80, "https": 443}


class _DecompressionFailed(Exception):
    pass


# --- Body transfer decoding ---

def _inflate(body: bytes) -> bytes:
    try:
        return zlib.decompress(body)
    except zlib.error:
        # raw deflate stream without the zlib wrapper
        return zlib.decompress(body, -zlib.MAX_WBITS)


def _zstd(body: bytes) -> bytes:
    return zstandard.ZstdDecompressor().decompressobj().decompress(body)


_DECODERS = {
    "gzip": gzip.decompress,
    "x-gzip": gzip.decompress,
    "deflate": _inflate,
    "zstd": _zstd,
}


def decode_content(body: bytes, content_encoding: Optional[str]) -> bytes:
    """Undo each listed content-encoding in reverse order of application."""
    if not body or not content_encoding:
        return body
    codings = [c.strip().lower() for c in content_encoding.split(",") if c.strip()]
    for coding in reversed(codings):
        if coding == "identity":
            continue
        decoder = _DECODERS.get(coding)
        if decoder is None:
            raise _DecompressionFailed(f"unsupported content-encoding {coding!r}")
        try:
            body = decoder(body)
        except (OSError, EOFError, zlib.error, zstandard.ZstdError) as e:
            raise _DecompressionFailed(f"{coding}: {e}")
    return body


# --- Entry normalization ---

def _header_value(headers: list[tuple[str, str]], name: str) -> Optional[str]:
    for key, value in headers:
        if key.lower() == name:
            return value
    return None


def _build_flow(
    *,
    flow_id: str,
    app_id: str,
    crawl_kind: CrawlKind,
    timestamp: int,
    method: str,
    url: str,
    headers: list[tuple[str, str]],
    raw_body: bytes,
    transfer_encoded: bool,
    response_status: Optional[int],
) -> FlowRecord:
    parts = urlsplit(url)
    scheme = parts.scheme.lower()
    if scheme not in DEFAULT_PORTS:
        raise MalformedEntryError(f"unsupported URL scheme in {url!r}")
    try:
        host = normalize_hostname(parts.hostname or "")
        port = parts.port or DEFAULT_PORTS[scheme]
    except (InvalidHostnameError, ValueError) as e:
        raise MalformedEntryError(f"bad URL {url!r}: {e}")

    body = raw_body
    failed = False
    if transfer_encoded:
        try:
            body = decode_content(raw_body, _header_value(headers, "content-encoding"))
        except _DecompressionFailed as e:
            logger.warning("DecompressionFailure in %s: %s; keeping raw body", flow_id, e)
            failed = True

    return FlowRecord(
        flow_id=flow_id,
        app_id=app_id,
        crawl_kind=crawl_kind,
        timestamp=timestamp,
        method=method.upper(),
        scheme=scheme,
        host=host,
        port=port,
        path=parts.path or "/",
        query=parts.query,
        request_headers=tuple(headers),
        request_body=body,
        body_length=len(body),
        original_length=len(raw_body),
        decompression_failed=failed,
        response_status=response_status,
    )


def _har_timestamp(value: Optional[str]) -> int:
    if not value:
        return 0
    try:
        started = datetime.fromisoformat(value)
    except ValueError:
        return 0
    if started.tzinfo is None:
        started = started.replace(tzinfo=timezone.utc)
    return int(started.timestamp() * 1000)


def _flow_from_har(entry: dict, flow_id: str, app_id: str, crawl_kind: CrawlKind) -> FlowRecord:
    try:
        request = entry["request"]
        headers = [(h["name"], h["value"]) for h in request.get("headers", [])]
        post = request.get("postData") or {}
        text = post.get("text") or ""
        binary = post.get("encoding") == "base64"
        raw_body = base64.b64decode(text, validate=True) if binary else text.encode("utf-8")
        response = entry.get("response") or {}
        status = response.get("status")
        return _build_flow(
            flow_id=flow_id,
            app_id=app_id,
            crawl_kind=crawl_kind,
            timestamp=_har_timestamp(entry.get("startedDateTime")),
            method=request["method"],
            url=request["url"],
            headers=headers,
            raw_body=raw_body,
            # HAR text is already decoded; only binary bodies may still be compressed
            transfer_encoded=binary,
            response_status=int(status) if isinstance(status, int) and status > 0 else None,
        )
    except (KeyError, TypeError, AttributeError, binascii.Error, ValidationError) as e:
        raise MalformedEntryError(f"{flow_id}: {e}")


def _flow_from_record(record: dict, flow_id: str, app_id: str, crawl_kind: CrawlKind) -> FlowRecord:
    try:
        if record.get("app") not in (None, app_id):
            logger.debug("%s: record app %r differs from manifest app %r", flow_id, record.get("app"), app_id)
        headers = [(str(name), str(value)) for name, value in record.get("headers") or []]
        status = record.get("status")
        return _build_flow(
            flow_id=flow_id,
            app_id=app_id,
            crawl_kind=crawl_kind,
            timestamp=int(record.get("ts") or 0),
            method=record["method"],
            url=record["url"],
            headers=headers,
            raw_body=base64.b64decode(record.get("body_b64") or "", validate=True),
            transfer_encoded=True,
            response_status=int(status) if status else None,
        )
    except (KeyError, TypeError, ValueError, binascii.Error, ValidationError) as e:
        raise MalformedEntryError(f"{flow_id}: {e}")


# --- Ingestion ---

def detect_capture_format(raw: bytes) -> str:
    """'har' when the whole document is a HAR log, 'jsonl' for flow records."""
    stripped = raw.lstrip()
    if not stripped:
        return "jsonl"
    if stripped.startswith(b"{"):
        try:
            document = orjson.loads(stripped)
        except orjson.JSONDecodeError:
            return "jsonl"
        if isinstance(document, dict) and "log" in document:
            return "har"
        return "jsonl"
    raise UnknownCaptureFormatError(f"capture starts with {stripped[:8]!r}")


def read_capture(
    file: Path,
    app_id: str,
    crawl_kind: CrawlKind = CrawlKind.MANUAL,
    source: Optional[str] = None,
) -> CaptureLog:
    """Parse one capture. Flow ids are `<app_id>/<source>#<entry index>`, source defaulting to the file name."""
    file = Path(file)
    source = source or file.name
    try:
        raw = file.read_bytes()
    except OSError as e:
        raise UnreadableArtifactError(f"cannot read capture {file}: {e.strerror or e}")

    capture_format = detect_capture_format(raw)
    flows = []
    malformed = 0

    if capture_format == "har":
        log = orjson.loads(raw)["log"]
        if not isinstance(log, dict):
            raise UnknownCaptureFormatError(f"{file}: HAR \"log\" is not an object")
        entries = log.get("entries", [])
        if not isinstance(entries, list):
            raise UnknownCaptureFormatError(f"{file}: HAR \"entries\" is not a list")
        for index, entry in enumerate(entries):
            flow_id = f"{app_id}/{source}#{index}"
            try:
                flows.append(_flow_from_har(entry, flow_id, app_id, crawl_kind))
            except MalformedEntryError as e:
                malformed += 1
                logger.debug("Skipping %s", e.detail)
    else:
        for index, line in enumerate(raw.splitlines()):
            if not line.strip():
                continue
            flow_id = f"{app_id}/{source}#{index}"
            try:
                record = orjson.loads(line)
                if not isinstance(record, dict):
                    raise MalformedEntryError(f"{flow_id}: not an object")
                flows.append(_flow_from_record(record, flow_id, app_id, crawl_kind))
            except orjson.JSONDecodeError as e:
                malformed += 1
                logger.debug("Skipping %s: %s", flow_id, e)
            except MalformedEntryError as e:
                malformed += 1
                logger.debug("Skipping %s", e.detail)

    if malformed:
        logger.warning("%s: skipped %d malformed entries", file, malformed)
    return CaptureLog(
        source=source,
        capture_format=capture_format,
        flows=tuple(flows),
        malformed_entries=malformed,
        decompression_failures=sum(1 for flow in flows if flow.decompression_failed),
    )


def ingest_capture(file: Path, app_id: str, crawl_kind: CrawlKind = CrawlKind.MANUAL) -> list[FlowRecord]:
    """One FlowRecord per request entry of a HAR or flow-record JSONL capture."""
    return list(read_capture(file, app_id, crawl_kind).flows)


def filter_reviewable(flows: list[FlowRecord]) -> list[FlowRecord]:
    """Requests with a non-zero body, in their original order."""
    return [flow for flow in flows if flow.body_length > 0]


def capture_sources(app) -> list[str]:
    """Flow-id source per capture: the file name, or `<position>-<file name>` when names repeat within the app."""
    names = [Path(ref.path).name for ref in app.capture_refs]
    return [name if names.count(name) == 1 else f"{position}-{name}" for position, name in enumerate(names)]


def load_app_flows(app) -> list[FlowRecord]:
    """Every flow of every capture listed for an app, in manifest order."""
    flows: list[FlowRecord] = []
    for ref, source in zip(app.capture_refs, capture_sources(app)):
        flows += read_capture(ref.path, app.app_id, ref.crawl_kind, source).flows
    return flows
