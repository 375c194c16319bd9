import logging
import re
import zipfile
from pathlib import Path
from typing import Iterable

import orjson
from pydantic import ValidationError

from mhaudit.domains.common.exceptions import (
    MalformedSignatureDbError,
    UnreadableArtifactError,
)
from mhaudit.domains.common.jsonio import read_packaged
from .dex import DEX_MAGIC_PREFIX, DexFile, descriptor_to_class_name
from .schemas import ClassSet, EmbeddedTrackerReport, TrackerMatch, TrackerSignature

logger = logging.getLogger(__name__)

DEFAULT_SIGNATURES_FILE = "signatures.json"

_ZIP_MAGIC = b"PK\x03\x04"
_DEX_MEMBER = re.compile(r"^classes\d*\.dex$")


# --- Artifact reading ---

def _normalize_class_line(line: str) -> str | None:
    line = line.strip()
    if not line or line.startswith("#"):
        return None
    if line.startswith("L") and line.endswith(";"):
        return descriptor_to_class_name(line)
    return line.replace("/", ".")


def _classes_from_text(raw: bytes) -> set[str]:
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise UnreadableArtifactError(f"class list is not UTF-8 text: {e}")
    names = set()
    for line in text.splitlines():
        name = _normalize_class_line(line)
        if name:
            names.add(name)
    return names


def dex_members(archive: zipfile.ZipFile) -> list[str]:
    """classes.dex, classes2.dex, ... at the archive root, in name order."""
    return sorted(name for name in archive.namelist() if _DEX_MEMBER.match(name))


def extract_class_names(artifact: Path, app_id: str = "") -> ClassSet:
    """Class names from an APK, a bare DEX or a plain-text class list."""
    artifact = Path(artifact)
    try:
        raw = artifact.read_bytes()
    except OSError as e:
        raise UnreadableArtifactError(f"cannot read {artifact}: {e.strerror or e}")

    if raw.startswith(_ZIP_MAGIC):
        try:
            with zipfile.ZipFile(artifact) as archive:
                members = dex_members(archive)
                if not members:
                    logger.warning("EmptyArtifact: %s contains no DEX members", artifact)
                    return ClassSet(app_id=app_id, warnings=("EmptyArtifact",))
                names: set[str] = set()
                for member in members:
                    names |= DexFile(archive.read(member)).class_names()
        except zipfile.BadZipFile as e:
            raise UnreadableArtifactError(f"{artifact} is not a readable APK: {e}")
        return ClassSet(app_id=app_id, classes=frozenset(names))

    if raw.startswith(DEX_MAGIC_PREFIX):
        return ClassSet(app_id=app_id, classes=frozenset(DexFile(raw).class_names()))

    return ClassSet(app_id=app_id, classes=frozenset(_classes_from_text(raw)), source="class_list")


# --- Signature database ---

def _signature_from_entry(entry: dict, position: int) -> TrackerSignature:
    """Accept the native shape and the Exodus export shape."""
    if "code_prefixes" in entry:
        prefixes = entry["code_prefixes"]
    else:
        prefixes = [p for p in (entry.get("code_signature") or "").split("|") if p.strip()]
    cleaned = tuple(prefix.replace("\\", "").strip().rstrip(".") for prefix in prefixes)
    name = entry.get("name") or ""
    signature_id = str(entry.get("id") or name or position)
    return TrackerSignature(
        signature_id=signature_id,
        tracker_name=name or signature_id,
        vendor=entry.get("vendor") or name or signature_id,
        code_prefixes=cleaned,
    )


def parse_signature_db(raw: bytes) -> list[TrackerSignature]:
    try:
        document = orjson.loads(raw)
    except orjson.JSONDecodeError as e:
        raise MalformedSignatureDbError(f"signature DB is not valid JSON: {e}")
    # Exodus exports wrap entries as {"trackers": {"<id>": {...}}}
    if isinstance(document, dict) and "trackers" in document:
        trackers = document["trackers"]
        document = [{"id": key, **value} for key, value in trackers.items()] if isinstance(trackers, dict) else trackers
    if not isinstance(document, list):
        raise MalformedSignatureDbError("signature DB must be an array of trackers")

    signatures = []
    seen = set()
    for position, entry in enumerate(document):
        if not isinstance(entry, dict):
            raise MalformedSignatureDbError(f"entry {position} is not an object")
        if not (entry.get("code_prefixes") or entry.get("code_signature")):
            # network-only Exodus entries carry nothing to match against code
            logger.debug("Skipping signature %r without code prefixes", entry.get("name"))
            continue
        try:
            signature = _signature_from_entry(entry, position)
        except ValidationError as e:
            raise MalformedSignatureDbError(f"entry {position}: {e.errors()[0]['msg']}")
        if signature.signature_id in seen:
            raise MalformedSignatureDbError(f"duplicate signature id {signature.signature_id!r}")
        seen.add(signature.signature_id)
        signatures.append(signature)
    return signatures


def load_signature_db(file: Path) -> list[TrackerSignature]:
    signatures = parse_signature_db(Path(file).read_bytes())
    logger.debug("Loaded %d tracker signatures from %s", len(signatures), file)
    return signatures


def load_default_signature_db() -> list[TrackerSignature]:
    return parse_signature_db(read_packaged(DEFAULT_SIGNATURES_FILE))


# --- Matching ---

def _package_prefixes(class_name: str) -> Iterable[str]:
    """'a.b.C' -> 'a.b.C', 'a.b', 'a' (every prefix ending at a '.' boundary)."""
    parts = class_name.split(".")
    for end in range(len(parts), 0, -1):
        yield ".".join(parts[:end])


def match_trackers(classes: ClassSet, db: list[TrackerSignature]) -> EmbeddedTrackerReport:
    """A signature matches when a class equals a prefix or extends it at a package boundary."""
    by_prefix: dict[str, list[TrackerSignature]] = {}
    for signature in db:
        for prefix in signature.code_prefixes:
            by_prefix.setdefault(prefix, []).append(signature)

    found: dict[tuple[str, str], str] = {}
    for class_name in sorted(classes.classes):
        for prefix in _package_prefixes(class_name):
            for signature in by_prefix.get(prefix, ()):
                found.setdefault((signature.signature_id, prefix), class_name)

    signatures = {signature.signature_id: signature for signature in db}
    matches = tuple(
        TrackerMatch(
            signature_id=signature_id,
            tracker_name=signatures[signature_id].tracker_name,
            vendor=signatures[signature_id].vendor,
            matched_prefix=prefix,
            example_class=example,
        )
        for (signature_id, prefix), example in sorted(found.items())
    )
    return EmbeddedTrackerReport(
        app_id=classes.app_id,
        matches=matches,
        distinct_trackers=len({m.signature_id for m in matches}),
        distinct_vendors=len({m.vendor for m in matches}),
        class_source=classes.source,
        class_count=len(classes.classes),
    )
