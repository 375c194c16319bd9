from __future__ import annotations

import base64
import hashlib

import orjson
import pytest

from mhaudit.domains.capture.decode import decode_body
from mhaudit.domains.common.enums import CrawlKind, HitLocation, HostLabel, VariantKind
from mhaudit.domains.common.exceptions import EmptyPersonaError, ManifestError, UnknownDataTypeError
from mhaudit.domains.detect.encodings import base64_forms, encode_value, hash_forms
from mhaudit.domains.detect.schemas import DetectionHit, Persona, PersonaAttribute
from mhaudit.domains.detect.service import (
    compile_persona,
    merge_rollups,
    parse_persona,
    rollup_hits,
    scan_flow,
)

AD_ID = "38400000-8cf0-11bd-b23e-10b96e4ef00d"
EMAIL = "erika.mustermann@example.org"


def _scan(matchers, flow) -> set[tuple[str, VariantKind, HitLocation]]:
    return {(hit.data_type_id, hit.variant_kind, hit.location) for hit in scan_flow(matchers, flow, decode_body(flow))}


def _hit(app_id: str, data_type_id: str, label: HostLabel, crawl_kind: CrawlKind = CrawlKind.MANUAL, n: int = 0) -> DetectionHit:
    return DetectionHit(
        app_id=app_id,
        flow_id=f"{app_id}/manual.jsonl#{n}",
        data_type_id=data_type_id,
        variant_kind=VariantKind.PLAIN,
        location=HitLocation.BODY,
        destination_host="h.example",
        host_label=label,
        crawl_kind=crawl_kind,
    )


# --- Persona compilation ---

def test_compiled_needles(taxonomy):
    persona = Persona(attributes=(
        PersonaAttribute(data_type_id="full_name", values=("Erika",)),
        PersonaAttribute(data_type_id="email_address", values=("erika@example.com",)),
        PersonaAttribute(data_type_id="body_weight", values=("82",), numeric=True, key_hints=("weight",)),
    ))
    matchers = compile_persona(persona, taxonomy).matchers
    needles = {(m.data_type_id, m.variant_kind): set() for m in matchers}
    for m in matchers:
        needles[(m.data_type_id, m.variant_kind)].add(m.needle)

    assert "RXJpa2E" in needles[("full_name", VariantKind.BASE64)]
    assert hashlib.sha256(b"erika@example.com").hexdigest() in needles[("email_address", VariantKind.SHA256_HEX)]
    assert ("full_name", VariantKind.PERCENT_ENCODED) not in needles
    assert needles[("email_address", VariantKind.PERCENT_ENCODED)] == {"erika%40example.com"}
    assert [m.variant_kind for m in matchers if m.data_type_id == "body_weight"] == [VariantKind.KEYED_NUMERIC]


def test_encoding_forms():
    assert base64_forms("Erika") == ["RXJpa2E=", "RXJpa2E"]
    assert hash_forms(VariantKind.MD5_HEX, "ABC") == [
        hashlib.md5(b"abc").hexdigest(),
        hashlib.md5(b"abc").hexdigest().upper(),
    ]
    assert encode_value(VariantKind.BASE64, "??>", url_context=True) == base64.urlsafe_b64encode(b"??>").decode().rstrip("=")
    with pytest.raises(ValueError):
        encode_value(VariantKind.KEYED_NUMERIC, "82")


def test_variant_kinds_can_be_restricted(persona, taxonomy):
    matchers = compile_persona(persona, taxonomy, variant_kinds=[VariantKind.PLAIN])
    assert matchers.kinds() == {VariantKind.PLAIN}


def test_persona_errors(taxonomy):
    with pytest.raises(EmptyPersonaError):
        parse_persona(b"[]")
    with pytest.raises(ManifestError):
        parse_persona(b'[{"type": "body_weight", "values": ["82"], "numeric": true}]')
    with pytest.raises(UnknownDataTypeError):
        compile_persona(parse_persona(b'[{"type": "shoe_size", "values": ["42x"]}]'), taxonomy)


# --- Scanning ---

def test_keyed_number_in_form_body(matchers, make_flow):
    assert _scan(matchers, make_flow(body=b"weight=82")) == {("body_weight", VariantKind.KEYED_NUMERIC, HitLocation.BODY)}


def test_bare_number_without_hint(matchers, make_flow):
    assert _scan(matchers, make_flow(body=b"page=82 of 90")) == set()


def test_hint_outside_the_window(matchers, make_flow):
    body = b"weight" + b" " * 40 + b"82"
    assert _scan(matchers, make_flow(body=body, headers=(("Content-Type", "text/plain"),))) == set()
    body = b"weight" + b" " * 10 + b"82"
    assert _scan(matchers, make_flow(body=body, headers=(("Content-Type", "text/plain"),))) == {
        ("body_weight", VariantKind.KEYED_NUMERIC, HitLocation.BODY),
    }


def test_keyed_number_by_json_key(matchers, make_flow):
    body = orjson.dumps({"metrics": [{"body_fat": 23.5}], "count": 72})
    assert _scan(matchers, make_flow(body=body, headers=(("Content-Type", "application/json"),))) == {
        ("body_fat", VariantKind.KEYED_NUMERIC, HitLocation.BODY),
    }


def test_md5_identifier_in_query_to_tracker(matchers, make_flow):
    digest = hashlib.md5(AD_ID.encode()).hexdigest()
    flow = make_flow(query=f"uid={digest}", body=b"v=1", host="t.appsflyer.com", label=HostLabel.TRACKER)
    (hit,) = scan_flow(matchers, flow, decode_body(flow))
    assert (hit.data_type_id, hit.variant_kind, hit.location) == ("advertising_id", VariantKind.MD5_HEX, HitLocation.QUERY)
    assert hit.host_label == HostLabel.TRACKER
    assert hit.destination_host == "t.appsflyer.com"


def test_uppercase_digest_and_base64(matchers, make_flow):
    digest = hashlib.sha1(EMAIL.encode()).hexdigest().upper()
    token = base64.b64encode(b"Erika Mustermann").decode()
    flow = make_flow(body=b"x=1", headers=(("X-Sig", digest), ("Authorization", f"Basic {token}")))
    assert _scan(matchers, flow) == {
        ("email_address", VariantKind.SHA1_HEX, HitLocation.HEADER),
        ("full_name", VariantKind.BASE64, HitLocation.HEADER),
    }


def test_percent_decoded_plain_counts_as_percent_encoded(matchers, make_flow):
    flow = make_flow(query="e=erika.mustermann%40example.org", body=b"v=1")
    assert _scan(matchers, flow) == {("email_address", VariantKind.PERCENT_ENCODED, HitLocation.QUERY)}


def test_plain_is_case_insensitive(matchers, make_flow):
    body = orjson.dumps({"condition": "HypoThyroidism"})
    assert _scan(matchers, make_flow(body=body)) == {("medical_condition", VariantKind.PLAIN, HitLocation.BODY)}


def test_digit_values_need_boundaries(matchers, make_flow):
    assert _scan(matchers, make_flow(body=b"ref=x105850")) == set()
    assert _scan(matchers, make_flow(body=b"zip=10585")) == {("postal_code", VariantKind.PLAIN, HitLocation.BODY)}


def test_header_names_are_not_searched(matchers, make_flow):
    flow = make_flow(body=b"x=1", headers=(("Hypothyroidism", "yes"),))
    assert _scan(matchers, flow) == set()


def test_one_hit_per_type_kind_and_location(matchers, make_flow):
    body = orjson.dumps({"a": EMAIL, "b": {"c": EMAIL}}) + b" " + EMAIL.encode()
    hits = scan_flow(matchers, make_flow(body=body), decode_body(make_flow(body=body)))
    assert [(h.data_type_id, h.variant_kind, h.location) for h in hits] == [
        ("email_address", VariantKind.PLAIN, HitLocation.BODY),
    ]


def test_unlabelled_flow_is_rejected(matchers, make_flow):
    flow = make_flow(body=b"x").model_copy(update={"host_label": None})
    with pytest.raises(ValueError):
        scan_flow(matchers, flow, decode_body(flow))


# --- Rollup ---

def test_rollup_splits_collection_and_sharing():
    rollup = rollup_hits([
        _hit("a", "body_weight", HostLabel.TRACKER),
        _hit("b", "medical_condition", HostLabel.NON_TRACKER),
    ])
    assert rollup["a"][CrawlKind.MANUAL]["body_weight"].shared
    flags = rollup["b"][CrawlKind.MANUAL]["medical_condition"]
    assert flags.collected and not flags.shared


def test_merge_is_order_independent():
    hits = [
        _hit("a", "body_weight", HostLabel.TRACKER, n=0),
        _hit("a", "body_weight", HostLabel.NON_TRACKER, n=1),
        _hit("a", "email_address", HostLabel.NON_TRACKER, CrawlKind.AUTOMATED, n=2),
        _hit("b", "gender", HostLabel.NON_TRACKER, n=3),
    ]
    parts = [rollup_hits([hit]) for hit in hits]
    assert merge_rollups(parts) == merge_rollups(reversed(parts)) == rollup_hits(hits)
    merged = rollup_hits(hits)["a"][CrawlKind.MANUAL]["body_weight"]
    assert merged.to_tracker and merged.to_non_tracker
