from __future__ import annotations

import random
import struct
import zipfile

import orjson
import pytest

from mhaudit.domains.common.exceptions import MalformedDexError, MalformedSignatureDbError, UnreadableArtifactError
from mhaudit.domains.staticscan.dex import DexFile, decode_mutf8, descriptor_to_class_name
from mhaudit.domains.staticscan.schemas import ClassSet, TrackerSignature
from mhaudit.domains.staticscan.service import (
    extract_class_names,
    load_default_signature_db,
    match_trackers,
    parse_signature_db,
)

FIREBASE = "Lcom/google/firebase/analytics/FirebaseAnalytics;"


def _string_table(blob: bytes) -> list[str]:
    """Reads string_ids straight from the header offsets, without DexFile."""
    size, offset = struct.unpack_from("<II", blob, 0x38)
    strings = []
    for index in range(size):
        (data_off,) = struct.unpack_from("<I", blob, offset + 4 * index)
        while blob[data_off] & 0x80:
            data_off += 1
        data_off += 1
        strings.append(blob[data_off:blob.index(b"\x00", data_off)].decode("ascii"))
    return strings


def _classes(*names: str, app_id: str = "org.example.app") -> ClassSet:
    return ClassSet(app_id=app_id, classes=frozenset(names), source="class_list")


def _signature(signature_id: str, *prefixes: str, vendor: str = "Vendor") -> TrackerSignature:
    return TrackerSignature(signature_id=signature_id, tracker_name=signature_id.title(), vendor=vendor, code_prefixes=prefixes)


# --- DEX ---

def test_dex_type_table_yields_dotted_class_names(build_dex, tmp_path):
    blob = build_dex([FIREBASE, "I", "[B", "Lorg/example/Main;"], extra_strings=("onCreate",))
    dex = DexFile(blob)

    assert dex.strings() == _string_table(blob)
    assert dex.class_names() == {"com.google.firebase.analytics.FirebaseAnalytics", "org.example.Main"}

    file = tmp_path / "classes.dex"
    file.write_bytes(blob)
    classes = extract_class_names(file, "org.example.app")
    assert classes.source == "type_ids"
    assert classes.classes == frozenset(dex.class_names())


def test_primitive_and_array_descriptors_only(build_dex):
    assert DexFile(build_dex(["I", "[B", "[Ljava/lang/String;"])).class_names() == set()


def test_multidex_apk_unions_root_dex_members(build_dex, tmp_path):
    apk = tmp_path / "app.apk"
    with zipfile.ZipFile(apk, "w") as archive:
        archive.writestr("classes.dex", build_dex([FIREBASE]))
        archive.writestr("classes2.dex", build_dex(["Lcom/appsflyer/AppsFlyerLib;"]))
        archive.writestr("assets/classes3.dex", build_dex(["Lcom/hidden/Asset;"]))
        archive.writestr("AndroidManifest.xml", b"\x03\x00")

    classes = extract_class_names(apk, "org.example.app")
    assert classes.classes == {
        "com.google.firebase.analytics.FirebaseAnalytics",
        "com.appsflyer.AppsFlyerLib",
    }


def test_apk_without_dex_is_flagged(tmp_path):
    apk = tmp_path / "empty.apk"
    with zipfile.ZipFile(apk, "w") as archive:
        archive.writestr("res/layout/main.xml", b"<x/>")
    classes = extract_class_names(apk, "org.example.app")
    assert classes.classes == frozenset()
    assert classes.warnings == ("EmptyArtifact",)


@pytest.mark.parametrize("blob", [b"dex\n035\x00" + b"\x00" * 8, b"dey\n035\x00" + b"\x00" * 0x70])
def test_malformed_dex(blob):
    with pytest.raises(MalformedDexError):
        DexFile(blob)


def test_truncated_tables(build_dex):
    blob = bytearray(build_dex([FIREBASE]))
    struct.pack_into("<I", blob, 0x38, 10_000)
    with pytest.raises(MalformedDexError):
        DexFile(bytes(blob))


def test_class_list_text_is_deduplicated(tmp_path):
    file = tmp_path / "classes.txt"
    file.write_text("a.b.C\na.b.C\n# comment\n\nLcom/x/Y;\ncom/z/W\n", encoding="utf-8")
    classes = extract_class_names(file)
    assert classes.classes == {"a.b.C", "com.x.Y", "com.z.W"}
    assert classes.source == "class_list"


def test_unreadable_artifact(tmp_path):
    with pytest.raises(UnreadableArtifactError):
        extract_class_names(tmp_path / "missing.apk")
    binary = tmp_path / "blob.bin"
    binary.write_bytes(b"\xff\xfe\x00garbage")
    with pytest.raises(UnreadableArtifactError):
        extract_class_names(binary)


def test_mutf8_decoding():
    assert decode_mutf8(b"plain") == "plain"
    assert decode_mutf8("é".encode("utf-8")) == "é"
    # modified UTF-8 encodes NUL as two bytes and supplementary characters as surrogate pairs
    assert decode_mutf8(b"\xc0\x80") == "\x00"
    assert decode_mutf8(b"\xed\xa0\xbd\xed\xb8\x80") == "\U0001F600"


def test_descriptor_conversion():
    assert descriptor_to_class_name("Lcom/example/Foo;") == "com.example.Foo"
    assert descriptor_to_class_name("[Lcom/example/Foo;") is None
    assert descriptor_to_class_name("J") is None


# --- Matching ---

def test_prefix_matches_at_package_boundary():
    db = [_signature("firebase", "com.google.firebase.analytics")]
    assert match_trackers(_classes("com.google.firebase.analytics.Logger"), db).distinct_trackers == 1
    assert match_trackers(_classes("com.google.firebaseanalyticsx.Y"), db).distinct_trackers == 0


def test_package_boundary_property():
    prefix = "com.tracker.sdk"
    db = [_signature("tracker", prefix)]
    parts = ["com", "tracker", "sdk", "sdkx", "trackers", "core", "Main"]
    rng = random.Random(7)
    for _ in range(10_000):
        name = ".".join(rng.choice(parts) for _ in range(rng.randint(1, 5)))
        expected = name == prefix or name.startswith(prefix + ".")
        assert (match_trackers(_classes(name), db).distinct_trackers == 1) == expected, name


def test_counts_distinct_trackers_and_vendors():
    db = [
        _signature(f"lib{i}", f"com.vendor{i % 14}.lib{i}", vendor=f"vendor{i % 14}")
        for i in range(19)
    ]
    classes = _classes(*(f"com.vendor{i % 14}.lib{i}.Entry" for i in range(19)))
    report = match_trackers(classes, db)
    assert report.distinct_trackers == 19
    assert report.distinct_vendors == 14
    assert report.class_count == 19


def test_nested_prefixes_match_both_signatures():
    db = load_default_signature_db()
    report = match_trackers(_classes("com.google.android.gms.ads.doubleclick.PublisherAdView"), db)
    assert {m.signature_id for m in report.matches} == {"google_admob", "google_doubleclick"}


def test_more_classes_never_lower_the_tracker_count():
    db = load_default_signature_db()
    pool = sorted(f"{prefix}.Entry" for signature in db for prefix in signature.code_prefixes)
    pool += ["org.example.Main", "com.googlex.Stub", "androidx.core.View"]
    rng = random.Random(11)
    for _ in range(200):
        base = set(rng.sample(pool, rng.randint(0, 6)))
        extended = base | set(rng.sample(pool, rng.randint(0, 6)))
        before = match_trackers(_classes(*base), db)
        after = match_trackers(_classes(*extended), db)
        assert after.distinct_trackers >= before.distinct_trackers
        assert {m.signature_id for m in before.matches} <= {m.signature_id for m in after.matches}


# --- Signature database ---

def test_exodus_export_shape():
    raw = orjson.dumps({"trackers": {
        "49": {"name": "Flurry", "code_signature": "com.flurry.", "network_signature": "flurry\\.com"},
        "70": {"name": "Branch", "code_signature": "io.branch.|com.branch\\.referral", "network_signature": ""},
        "99": {"name": "Network only", "code_signature": "", "network_signature": "example\\.net"},
    }})
    signatures = {s.signature_id: s for s in parse_signature_db(raw)}

    assert set(signatures) == {"49", "70"}
    assert signatures["49"].code_prefixes == ("com.flurry",)
    assert signatures["70"].code_prefixes == ("io.branch", "com.branch.referral")
    assert signatures["70"].vendor == "Branch"


@pytest.mark.parametrize("raw", [
    b"{",
    b'{"not": "a list"}',
    b'[{"id": "a", "name": "A", "code_prefixes": ["nodot"]}]',
    b'[{"id": "a", "code_prefixes": ["a.b"]}, {"id": "a", "code_prefixes": ["c.d"]}]',
])
def test_malformed_signature_db(raw):
    with pytest.raises(MalformedSignatureDbError):
        parse_signature_db(raw)


def test_default_signature_db_is_well_formed():
    db = load_default_signature_db()
    assert db[0].signature_id == "firebase_analytics"
    assert len({s.signature_id for s in db}) == len(db)
