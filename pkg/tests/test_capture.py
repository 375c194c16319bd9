from __future__ import annotations

import base64
import gzip

import orjson
import pytest
import zstandard
from requests_toolbelt import MultipartEncoder

from mhaudit.domains.apps.schemas import AppRecord, CaptureRef
from mhaudit.domains.common.enums import CrawlKind, FeatureCategory, HitLocation, ViewKind
from mhaudit.domains.common.exceptions import UnknownCaptureFormatError
from mhaudit.domains.capture.decode import decode_body
from mhaudit.domains.capture.service import filter_reviewable, ingest_capture, load_app_flows, read_capture


def _jsonl(*records: dict) -> bytes:
    return b"".join(orjson.dumps(record) + b"\n" for record in records)


def _record(url: str, body: bytes = b"", method: str = "POST", headers: list | None = None) -> dict:
    return {
        "app": "org.example.app",
        "ts": 1_700_000_000_000,
        "method": method,
        "url": url,
        "headers": headers or [],
        "body_b64": base64.b64encode(body).decode("ascii"),
        "status": 200,
    }


def _har(*entries: dict) -> bytes:
    return orjson.dumps({"log": {"version": "1.2", "entries": list(entries)}})


# --- Ingestion ---

def test_har_entry_maps_to_flow(tmp_path):
    file = tmp_path / "session.har"
    file.write_bytes(_har({
        "startedDateTime": "2023-11-14T22:13:20+00:00",
        "request": {
            "method": "post",
            "url": "https://API.X.com/v1/log?k=v",
            "headers": [{"name": "Content-Type", "value": "application/x-www-form-urlencoded"}],
            "postData": {"mimeType": "application/x-www-form-urlencoded", "text": "a=1"},
        },
        "response": {"status": 200},
    }))

    (flow,) = ingest_capture(file, "org.example.app", CrawlKind.AUTOMATED)
    assert flow.flow_id == "org.example.app/session.har#0"
    assert (flow.method, flow.host, flow.path, flow.query) == ("POST", "api.x.com", "/v1/log", "k=v")
    assert flow.request_body == b"a=1"
    assert flow.body_length == 3
    assert flow.port == 443
    assert flow.crawl_kind == CrawlKind.AUTOMATED
    assert flow.timestamp == 1_700_000_000_000
    assert flow.response_status == 200


def test_har_binary_body_is_decompressed(tmp_path):
    file = tmp_path / "session.har"
    file.write_bytes(_har({
        "request": {
            "method": "POST",
            "url": "https://api.x.com/sync",
            "headers": [{"name": "Content-Encoding", "value": "gzip"}],
            "postData": {"text": base64.b64encode(gzip.compress(b"weight=82")).decode(), "encoding": "base64"},
        },
    }))
    (flow,) = ingest_capture(file, "org.example.app")
    assert flow.request_body == b"weight=82"
    assert flow.body_length == 9


def test_malformed_har_entries_are_counted(tmp_path):
    file = tmp_path / "session.har"
    file.write_bytes(_har(
        {"request": {"method": "GET", "url": "https://ok.example/"}},
        {"response": {"status": 200}},
        {"request": {"method": "GET", "url": "ftp://files.example/"}},
    ))
    log = read_capture(file, "org.example.app")
    assert log.capture_format == "har"
    assert len(log.flows) == 1
    assert log.malformed_entries == 2


def test_jsonl_empty_body(tmp_path):
    file = tmp_path / "manual.jsonl"
    file.write_bytes(_jsonl({"app": "c.ex", "method": "GET", "url": "http://t.co/", "body_b64": ""}))
    (flow,) = ingest_capture(file, "c.ex")
    assert flow.body_length == 0
    assert flow.port == 80
    assert flow.path == "/"


@pytest.mark.parametrize("encoding, compress", [
    ("gzip", gzip.compress),
    ("zstd", lambda data: zstandard.ZstdCompressor().compress(data)),
    ("identity", lambda data: data),
])
def test_content_encodings(tmp_path, encoding, compress):
    file = tmp_path / "manual.jsonl"
    file.write_bytes(_jsonl(_record(
        "https://api.x.com/sync",
        compress(b"weight=82"),
        headers=[["Content-Encoding", encoding]],
    )))
    (flow,) = ingest_capture(file, "org.example.app")
    assert flow.request_body == b"weight=82"
    assert flow.body_length == 9


def test_decompression_failure_keeps_raw_body(tmp_path):
    file = tmp_path / "manual.jsonl"
    file.write_bytes(_jsonl(_record("https://api.x.com/sync", b"not gzip", headers=[["Content-Encoding", "gzip"]])))
    log = read_capture(file, "org.example.app")
    assert log.flows[0].decompression_failed
    assert log.flows[0].request_body == b"not gzip"
    assert log.decompression_failures == 1


def test_jsonl_lines_are_indexed_and_bad_lines_skipped(tmp_path):
    file = tmp_path / "manual.jsonl"
    file.write_bytes(
        _jsonl(_record("https://a.example/", b"x"))
        + b"\n{broken\n"
        + _jsonl(_record("https://b.example/", method="GET"))
    )
    log = read_capture(file, "org.example.app")
    assert [flow.flow_id for flow in log.flows] == [
        "org.example.app/manual.jsonl#0",
        "org.example.app/manual.jsonl#3",
    ]
    assert log.malformed_entries == 1


def test_unknown_capture_format(tmp_path):
    file = tmp_path / "capture.pcap"
    file.write_bytes(b"\xd4\xc3\xb2\xa1binary")
    with pytest.raises(UnknownCaptureFormatError):
        read_capture(file, "org.example.app")


@pytest.mark.parametrize("document", [
    {"log": None},
    {"log": {"entries": None}},
    {"log": {"entries": {"0": {}}}},
], ids=["null-log", "null-entries", "entries-object"])
def test_har_without_an_entry_list_is_rejected(tmp_path, document):
    file = tmp_path / "session.har"
    file.write_bytes(orjson.dumps(document))
    with pytest.raises(UnknownCaptureFormatError):
        read_capture(file, "org.example.app")


def test_har_time_without_offset_is_utc(tmp_path):
    file = tmp_path / "session.har"
    file.write_bytes(_har({
        "startedDateTime": "2023-11-14T22:13:20",
        "request": {"method": "GET", "url": "https://api.x.com/"},
    }))
    (flow,) = ingest_capture(file, "org.example.app")
    assert flow.timestamp == 1_700_000_000_000


def test_ingestion_is_deterministic(tmp_path):
    file = tmp_path / "manual.jsonl"
    file.write_bytes(_jsonl(
        _record("https://b.example/v1", b"x=1"),
        _record("https://a.example/", method="GET"),
        _record("https://c.example/sync", b'{"k": "v"}', headers=[["Content-Type", "application/json"]]),
    ))
    first = ingest_capture(file, "org.example.app")
    assert ingest_capture(file, "org.example.app") == first
    assert [flow.host for flow in first] == ["b.example", "a.example", "c.example"]


def test_same_named_captures_get_distinct_flow_ids(tmp_path):
    for kind in ("manual", "automated"):
        (tmp_path / kind).mkdir()
        (tmp_path / kind / "flows.jsonl").write_bytes(_jsonl(_record("https://api.x.com/a", b"x")))
    app = AppRecord(
        app_id="org.example.app",
        feature_category=FeatureCategory.HEALTH_MONITOR,
        capture_refs=(
            CaptureRef(path=tmp_path / "manual" / "flows.jsonl"),
            CaptureRef(path=tmp_path / "automated" / "flows.jsonl", crawl_kind=CrawlKind.AUTOMATED),
        ),
    )
    flows = load_app_flows(app)
    assert [flow.flow_id for flow in flows] == [
        "org.example.app/0-flows.jsonl#0",
        "org.example.app/1-flows.jsonl#0",
    ]
    assert [flow.crawl_kind for flow in flows] == [CrawlKind.MANUAL, CrawlKind.AUTOMATED]


def test_reviewable_filter_keeps_order(make_flow):
    flows = [
        make_flow(method="GET", flow_id="a#0"),
        make_flow(body=b"x", flow_id="a#1"),
        make_flow(method="GET", flow_id="a#2"),
    ]
    assert [flow.flow_id for flow in filter_reviewable(flows)] == ["a#1"]
    assert filter_reviewable([]) == []


# --- Decoded views ---

def _texts(views, kind: ViewKind) -> dict:
    return {view.key: view.text for view in views.of_kind(kind)}


def test_nested_json_strings(make_flow):
    views = decode_body(make_flow(body=b'{"u":{"em":"a@b.c"},"n":[1,true,null]}', headers=(("Content-Type", "application/json"),)))
    assert _texts(views, ViewKind.JSON_STRINGS) == {"u.em": "a@b.c", "n.0": "1"}


def test_form_fields_are_percent_decoded(make_flow):
    views = decode_body(make_flow(body=b"name=Erika%20M", headers=(("Content-Type", "application/x-www-form-urlencoded"),)))
    assert _texts(views, ViewKind.FORM_FIELDS) == {"name": "Erika M"}


def test_form_field_holding_json_is_expanded(make_flow):
    body = b"payload=%7B%22weight%22%3A82%7D"
    views = decode_body(make_flow(body=body))
    nested = {view.key_leaf: view.text for view in views.of_kind(ViewKind.JSON_STRINGS)}
    assert nested == {"weight": "82"}


def test_query_is_kept_verbatim_after_percent_decoding(make_flow):
    views = decode_body(make_flow(query="q=eyJ3IjoiODIifQ", method="GET"))
    query_views = [view for view in views.views if view.location == HitLocation.QUERY]
    assert {view.text for view in query_views} == {"q=eyJ3IjoiODIifQ", "eyJ3IjoiODIifQ"}
    assert not views.of_kind(ViewKind.JSON_STRINGS)


def test_multipart_parts(make_flow):
    encoder = MultipartEncoder(fields={"profile": '{"email": "a@b.c"}', "note": "hello"})
    views = decode_body(make_flow(body=encoder.to_string(), headers=(("Content-Type", encoder.content_type),)))
    assert _texts(views, ViewKind.MULTIPART_PARTS) == {"profile": '{"email": "a@b.c"}', "note": "hello"}
    assert _texts(views, ViewKind.JSON_STRINGS) == {"profile.email": "a@b.c"}


def test_raw_body_view_is_always_present(make_flow):
    views = decode_body(make_flow(body=b"\xff\xfe not utf-8", headers=(("Content-Type", "application/json"),)))
    (raw,) = [view for view in views.of_kind(ViewKind.RAW_TEXT) if view.location == HitLocation.BODY]
    assert "not utf-8" in raw.text
