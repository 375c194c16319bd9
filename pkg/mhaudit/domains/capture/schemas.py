from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from mhaudit.domains.common.enums import CrawlKind, HitLocation, HostLabel, ViewKind


class FlowRecord(BaseModel):
    """One captured HTTP request (with response metadata)."""
    model_config = ConfigDict(frozen=True, ser_json_bytes="base64")

    flow_id: str
    app_id: str
    crawl_kind: CrawlKind = CrawlKind.MANUAL
    timestamp: int = 0  # ms since epoch
    method: str
    scheme: str = "https"
    host: str
    port: int = Field(default=443, ge=0, le=65535)
    path: str = "/"
    query: str = ""
    request_headers: tuple[tuple[str, str], ...] = ()
    request_body: bytes = b""
    body_length: int = 0
    original_length: int = 0  # on the wire, before content-encoding was removed
    decompression_failed: bool = False
    response_status: Optional[int] = None
    host_label: Optional[HostLabel] = None

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.body_length != len(self.request_body):
            raise ValueError("body_length must equal the decoded body size")
        if self.host != self.host.lower():
            raise ValueError("host must be lowercase")
        if self.method != self.method.upper():
            raise ValueError("method must be uppercase")
        return self

    def header(self, name: str) -> Optional[str]:
        """First header value with a case-insensitive name match."""
        name = name.lower()
        for key, value in self.request_headers:
            if key.lower() == name:
                return value
        return None

    @property
    def content_type(self) -> str:
        return (self.header("content-type") or "").lower()


class View(BaseModel):
    """Decoded text of one part of a request, tagged with where it came from."""
    model_config = ConfigDict(frozen=True)

    view_kind: ViewKind
    text: str
    location: HitLocation
    provenance: str  # e.g. "body", "body.json:user.email", "query"
    key: Optional[str] = None  # decoded field key for form/json/multipart views

    @property
    def key_leaf(self) -> Optional[str]:
        """Last non-index segment of the key path: 'a.0.weight' -> 'weight'."""
        if not self.key:
            return None
        for segment in reversed(self.key.split(".")):
            if not segment.isdigit():
                return segment
        return None


class DecodedViews(BaseModel):
    model_config = ConfigDict(frozen=True)

    flow_id: str
    views: tuple[View, ...]

    @model_validator(mode="after")
    def _raw_text_present(self):
        if not any(v.view_kind == ViewKind.RAW_TEXT and v.location == HitLocation.BODY for v in self.views):
            raise ValueError("RawText body view is always present")
        return self

    def of_kind(self, kind: ViewKind) -> list[View]:
        return [view for view in self.views if view.view_kind == kind]


class CaptureLog(BaseModel):
    """Result of ingesting one capture file."""
    model_config = ConfigDict(frozen=True)

    source: str
    capture_format: str  # "har" or "jsonl"
    flows: tuple[FlowRecord, ...] = ()
    malformed_entries: int = 0
    decompression_failures: int = 0
