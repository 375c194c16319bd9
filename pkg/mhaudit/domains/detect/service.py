import logging
import re
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from pathlib import Path
from typing import Iterable, NamedTuple, Optional

import orjson
from pydantic import ValidationError

from mhaudit.domains.apps.schemas import AppRecord
from mhaudit.domains.capture.decode import decode_body
from mhaudit.domains.capture.schemas import DecodedViews, FlowRecord
from mhaudit.domains.capture.service import filter_reviewable, load_app_flows
from mhaudit.domains.common.enums import (
    HitLocation,
    HostLabel,
    HostMatchMode,
    VariantKind,
    ViewKind,
)
from mhaudit.domains.common.exceptions import (
    AuditError,
    EmptyPersonaError,
    ManifestError,
    UnknownDataTypeError,
)
from mhaudit.domains.common.fields import LedgerEntry
from mhaudit.domains.common.jsonio import read_packaged
from mhaudit.domains.hostclass.schemas import HostsList
from mhaudit.domains.hostclass.service import label_flows
from mhaudit.domains.taxonomy.schemas import Taxonomy
from .encodings import HASH_KINDS, base64_forms, hash_forms, percent_encode
from .schemas import (
    DetectionHit,
    DetectionSet,
    Matcher,
    MatcherSet,
    Persona,
    PersonaAttribute,
    Rollup,
    TransmissionFlags,
)

logger = logging.getLogger(__name__)

DEFAULT_PERSONA_FILE = "persona.json"
DEFAULT_NUMERIC_WINDOW = 32

_PERCENT_DECODED_KINDS = (ViewKind.URL_DECODED, ViewKind.FORM_FIELDS)


# --- Persona ---

def parse_persona(raw: bytes) -> Persona:
    try:
        document = orjson.loads(raw)
    except orjson.JSONDecodeError as e:
        raise ManifestError(f"persona is not valid JSON: {e}")
    if not isinstance(document, list):
        raise ManifestError("persona must be an array of attributes")
    if not document:
        raise EmptyPersonaError()
    attributes = []
    for position, item in enumerate(document):
        if not isinstance(item, dict):
            raise ManifestError(f"persona entry {position} is not an object")
        try:
            attributes.append(PersonaAttribute(
                data_type_id=item.get("type", ""),
                values=tuple(str(v) for v in item.get("values") or ()),
                numeric=bool(item.get("numeric", False)),
                key_hints=tuple(item.get("key_hints") or ()),
            ))
        except ValidationError as e:
            raise ManifestError(f"persona entry {position}: {e.errors()[0]['msg']}")
    return Persona(attributes=tuple(attributes))


def load_persona(file: Path) -> Persona:
    return parse_persona(Path(file).read_bytes())


def load_default_persona() -> Persona:
    return parse_persona(read_packaged(DEFAULT_PERSONA_FILE))


# --- Matcher compilation ---

def _value_matchers(attribute: PersonaAttribute, value: str, kinds: set[VariantKind]) -> list[Matcher]:
    data_type_id = attribute.data_type_id
    matchers = []
    if VariantKind.PLAIN in kinds:
        matchers.append(Matcher(
            data_type_id=data_type_id,
            variant_kind=VariantKind.PLAIN,
            needle=value,
            case_insensitive=True,
            digit_bounded=value.isdigit(),
        ))
    encoded = percent_encode(value)
    if VariantKind.PERCENT_ENCODED in kinds and encoded != value:
        matchers.append(Matcher(
            data_type_id=data_type_id,
            variant_kind=VariantKind.PERCENT_ENCODED,
            needle=encoded,
            case_insensitive=True,
        ))
    if VariantKind.BASE64 in kinds:
        for form in base64_forms(value):
            matchers.append(Matcher(data_type_id=data_type_id, variant_kind=VariantKind.BASE64, needle=form))
    for kind in HASH_KINDS:
        if kind in kinds:
            for form in hash_forms(kind, value):
                matchers.append(Matcher(data_type_id=data_type_id, variant_kind=kind, needle=form))
    return matchers


def compile_persona(
    persona: Persona,
    taxonomy: Taxonomy,
    variant_kinds: Optional[Iterable[VariantKind]] = None,
    numeric_window: int = DEFAULT_NUMERIC_WINDOW,
) -> MatcherSet:
    """Encode every persona value into each searched-for form."""
    if not persona.attributes:
        raise EmptyPersonaError()
    kinds = set(variant_kinds) if variant_kinds is not None else set(VariantKind)

    matchers: list[Matcher] = []
    seen: set[tuple[str, VariantKind, str]] = set()
    for attribute in persona.attributes:
        if taxonomy.entry(attribute.data_type_id) is None:
            raise UnknownDataTypeError(f"persona type {attribute.data_type_id!r} is not in the taxonomy")
        for value in attribute.values:
            if attribute.numeric:
                candidates = []
                if VariantKind.KEYED_NUMERIC in kinds:
                    candidates.append(Matcher(
                        data_type_id=attribute.data_type_id,
                        variant_kind=VariantKind.KEYED_NUMERIC,
                        needle=value,
                        key_hints=tuple(h.lower() for h in attribute.key_hints),
                    ))
            else:
                candidates = _value_matchers(attribute, value, kinds)
            for matcher in candidates:
                key = (matcher.data_type_id, matcher.variant_kind, matcher.needle)
                if key not in seen:
                    seen.add(key)
                    matchers.append(matcher)
    logger.debug("Compiled %d matchers for %d persona attributes", len(matchers), len(persona.attributes))
    return MatcherSet(matchers=tuple(matchers), numeric_window=numeric_window)


# --- Scanning ---

class _Unit(NamedTuple):
    """One searchable text of a request."""
    location: HitLocation
    view_kind: ViewKind
    text: str
    folded: str
    raw: bool
    key_leaf: Optional[str]


@lru_cache(maxsize=4096)
def _bounded_pattern(needle: str, case_insensitive: bool) -> re.Pattern:
    flags = re.IGNORECASE if case_insensitive else 0
    return re.compile(rf"(?<![A-Za-z0-9]){re.escape(needle)}(?![A-Za-z0-9])", flags)


@lru_cache(maxsize=1024)
def _number_pattern(value: str) -> re.Pattern:
    return re.compile(rf"(?<![A-Za-z0-9.]){re.escape(value)}(?![A-Za-z0-9]|\.\d)")


def _contains(matcher: Matcher, unit: _Unit) -> bool:
    if matcher.digit_bounded:
        return _bounded_pattern(matcher.needle, matcher.case_insensitive).search(unit.text) is not None
    if matcher.case_insensitive:
        return matcher.needle.lower() in unit.folded
    return matcher.needle in unit.text


def _same_number(text: str, value: str) -> bool:
    try:
        return float(text.strip()) == float(value)
    except ValueError:
        return False


def _keyed_match(matcher: Matcher, unit: _Unit, window: int) -> bool:
    if unit.key_leaf and unit.key_leaf.lower() in matcher.key_hints and _same_number(unit.text, matcher.needle):
        return True
    for found in _number_pattern(matcher.needle).finditer(unit.text):
        preceding = unit.text[max(0, found.start() - window):found.start()].lower()
        if any(hint in preceding for hint in matcher.key_hints):
            return True
    return False


def _units(flow: FlowRecord, views: DecodedViews) -> list[_Unit]:
    units = [
        _Unit(HitLocation.PATH, ViewKind.RAW_TEXT, flow.path, flow.path.lower(), True, None),
        _Unit(HitLocation.QUERY, ViewKind.RAW_TEXT, flow.query, flow.query.lower(), True, None),
    ]
    # header names are not searched
    for _, value in flow.request_headers:
        units.append(_Unit(HitLocation.HEADER, ViewKind.RAW_TEXT, value, value.lower(), True, None))
    for view in views.views:
        raw = view.view_kind == ViewKind.RAW_TEXT
        units.append(_Unit(view.location, view.view_kind, view.text, view.text.lower(), raw, view.key_leaf))
    return [unit for unit in units if unit.text]


def scan_flow(matchers: MatcherSet, flow: FlowRecord, views: DecodedViews) -> list[DetectionHit]:
    """Hits for one reviewable, host-labelled flow; one per (data type, variant, location)."""
    if flow.host_label is None:
        raise ValueError(f"flow {flow.flow_id} has not been host-labelled")
    units = _units(flow, views)
    percent_enabled = VariantKind.PERCENT_ENCODED in matchers.kinds()
    found: set[tuple[str, VariantKind, HitLocation]] = set()

    for matcher in matchers.matchers:
        if matcher.variant_kind == VariantKind.KEYED_NUMERIC:
            for unit in units:
                if _keyed_match(matcher, unit, matchers.numeric_window):
                    found.add((matcher.data_type_id, VariantKind.KEYED_NUMERIC, unit.location))
            continue

        raw_hit: dict[HitLocation, bool] = {}
        decoded_only: set[HitLocation] = set()
        for unit in units:
            if not _contains(matcher, unit):
                continue
            if unit.raw or matcher.variant_kind != VariantKind.PLAIN or unit.view_kind not in _PERCENT_DECODED_KINDS:
                raw_hit[unit.location] = True
            else:
                decoded_only.add(unit.location)
        for location in raw_hit:
            found.add((matcher.data_type_id, matcher.variant_kind, location))
        # plain text recovered only by percent-decoding was sent percent-encoded
        if percent_enabled:
            for location in decoded_only - set(raw_hit):
                found.add((matcher.data_type_id, VariantKind.PERCENT_ENCODED, location))

    hits = [
        DetectionHit(
            app_id=flow.app_id,
            flow_id=flow.flow_id,
            data_type_id=data_type_id,
            variant_kind=kind,
            location=location,
            destination_host=flow.host,
            host_label=flow.host_label,
            crawl_kind=flow.crawl_kind,
        )
        for data_type_id, kind, location in found
    ]
    return sorted(hits, key=lambda hit: hit.sort_key)


def merge_rollups(rollups: Iterable[Rollup]) -> Rollup:
    """Commutative, associative union of per-app transmission flags."""
    merged: Rollup = {}
    for rollup in rollups:
        for app_id, per_kind in rollup.items():
            app_entry = merged.setdefault(app_id, {})
            for crawl_kind, per_type in per_kind.items():
                kind_entry = app_entry.setdefault(crawl_kind, {})
                for data_type_id, flags in per_type.items():
                    kind_entry[data_type_id] = kind_entry[data_type_id].merge(flags) if data_type_id in kind_entry else flags
    return _ordered(merged)


def _ordered(rollup: Rollup) -> Rollup:
    return {
        app_id: {
            kind: dict(sorted(rollup[app_id][kind].items()))
            for kind in sorted(rollup[app_id], key=lambda k: k.value)
        }
        for app_id in sorted(rollup)
    }


def rollup_hits(hits: Iterable[DetectionHit]) -> Rollup:
    return merge_rollups(
        {hit.app_id: {hit.crawl_kind: {hit.data_type_id: TransmissionFlags(
            to_non_tracker=hit.host_label == HostLabel.NON_TRACKER,
            to_tracker=hit.host_label == HostLabel.TRACKER,
        )}}}
        for hit in hits
    )


def scan_flows(matchers: MatcherSet, flows: list[FlowRecord]) -> list[DetectionHit]:
    hits = []
    for flow in filter_reviewable(flows):
        hits += scan_flow(matchers, flow, decode_body(flow))
    return hits


def scan_app(
    app: AppRecord,
    matchers: MatcherSet,
    hosts: HostsList,
    mode: HostMatchMode = HostMatchMode.EXACT,
) -> list[DetectionHit]:
    flows = label_flows(load_app_flows(app), hosts, mode)
    hits = scan_flows(matchers, flows)
    logger.debug("%s: %d flows, %d hits", app.app_id, len(flows), len(hits))
    return hits


def scan_corpus(
    apps: Iterable[AppRecord],
    matchers: MatcherSet,
    hosts: HostsList,
    mode: HostMatchMode = HostMatchMode.EXACT,
    jobs: int = 1,
) -> DetectionSet:
    """Scan every app; a failing app lands in the error ledger and the rest continue."""
    apps = list(apps)

    def _scan(app: AppRecord):
        try:
            return app.app_id, scan_app(app, matchers, hosts, mode), None
        except (AuditError, OSError) as e:
            logger.warning("%s: detection failed: %s", app.app_id, getattr(e, "detail", e))
            return app.app_id, [], LedgerEntry.from_exception(app.app_id, "detect", e)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_scan, apps))
    else:
        results = [_scan(app) for app in apps]

    hits = sorted((hit for _, app_hits, _ in results for hit in app_hits), key=lambda hit: hit.sort_key)
    errors = tuple(error for _, _, error in results if error is not None)
    scanned = tuple(sorted(app_id for app_id, _, error in results if error is None))
    logger.info("Detected %d transmissions across %d apps", len(hits), len(scanned))
    return DetectionSet(hits=tuple(hits), rollup=rollup_hits(hits), app_ids=scanned, errors=errors)
