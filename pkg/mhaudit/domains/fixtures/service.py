import base64
import gzip
import logging
import random
import string
from pathlib import Path
from typing import Optional

import orjson
from pydantic import ValidationError

from mhaudit.domains.assess.schemas import DeclarationVerdict, ExpectationPolicy, ScopeFinding
from mhaudit.domains.assess.service import load_default_policy, verdicts_for
from mhaudit.domains.common.enums import (
    STUDY_LABELS,
    CrawlKind,
    DataCategory,
    HitLocation,
    HostLabel,
    VariantKind,
)
from mhaudit.domains.common.exceptions import InvalidPlanError, IoFailureError
from mhaudit.domains.common.jsonio import dumps_line, read_packaged, write_json
from mhaudit.domains.detect.encodings import encode_value, is_url_safe, percent_encode
from mhaudit.domains.detect.schemas import Persona, PersonaAttribute
from mhaudit.domains.detect.service import compile_persona, load_default_persona
from mhaudit.domains.hostclass.service import parse_hosts_list
from mhaudit.domains.staticscan.schemas import ClassSet, TrackerSignature
from mhaudit.domains.staticscan.service import load_default_signature_db, match_trackers
from mhaudit.domains.taxonomy.schemas import Taxonomy
from mhaudit.domains.taxonomy.service import load_default_taxonomy
from .plans import solve_targets
from .schemas import (
    NONTRACKER_HOST_PREFIXES,
    AppPlan,
    FixtureConfig,
    FixtureCorpus,
    GroundTruth,
    LeakPlan,
    PlantedEmbedding,
    PlantedHit,
)

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
TRUTH_FILE = "ground_truth.json"

# manifest key -> (packaged file, file name in the corpus)
RESOURCES = {
    "taxonomy": ("taxonomy.json", "taxonomy.json"),
    "hosts": ("hosts_sample.txt", "hosts.txt"),
    "signatures": ("signatures.json", "signatures.json"),
    "persona": ("persona.json", "persona.json"),
    "policy": ("policy.json", "policy.json"),
    "psl": ("psl_snapshot.txt", "psl.txt"),
}

CAPTURE_FILES = {CrawlKind.MANUAL: "manual.jsonl", CrawlKind.AUTOMATED: "automated.jsonl"}

BASE_TIMESTAMP = 1_700_000_000_000
DECOY_KEYS = ("session", "nonce", "trace", "event", "cursor", "locale", "channel")
APP_CLASSES = (
    "androidx.appcompat.app.AppCompatActivity",
    "kotlin.collections.CollectionsKt",
    "okhttp3.OkHttpClient",
)
MARKER_CLASS = "Sdk"

_BASE_HEADERS = (("User-Agent", "okhttp"), ("Accept", "application/json"))


def load_fixture_config(file: Path) -> FixtureConfig:
    try:
        return FixtureConfig.model_validate(orjson.loads(Path(file).read_bytes()))
    except orjson.JSONDecodeError as e:
        raise InvalidPlanError(f"fixture config is not valid JSON: {e}")
    except ValidationError as e:
        error = e.errors()[0]
        raise InvalidPlanError(f"{'.'.join(str(p) for p in error['loc'])}: {error['msg']}")


def load_ground_truth(file: Path) -> GroundTruth:
    try:
        return GroundTruth.model_validate(orjson.loads(Path(file).read_bytes()))
    except (orjson.JSONDecodeError, ValidationError) as e:
        raise InvalidPlanError(f"ground truth {file} is unreadable: {e}")


# --- Decoy values ---

class DecoyWords:
    """Seeded letters-only values that never contain a persona needle or key hint."""

    def __init__(self, rng: random.Random, persona: Persona, taxonomy: Taxonomy):
        self.rng = rng
        matchers = compile_persona(persona, taxonomy).matchers
        banned = {m.needle.lower() for m in matchers if m.variant_kind != VariantKind.KEYED_NUMERIC}
        banned |= {hint for m in matchers for hint in m.key_hints}
        self.banned = sorted(banned)

    def word(self) -> str:
        while True:
            length = self.rng.randint(16, 24)
            word = "".join(self.rng.choice(string.ascii_letters) for _ in range(length))
            folded = word.lower()
            if not any(needle in folded for needle in self.banned):
                return word

    def fields(self, count: int = 2) -> dict[str, str]:
        return {key: self.word() for key in self.rng.sample(DECOY_KEYS, count)}


# --- Plan validation ---

def marker_class(signature: TrackerSignature) -> str:
    return f"{signature.code_prefixes[0]}.{MARKER_CLASS}"


def plantable_signatures(db: list[TrackerSignature]) -> list[TrackerSignature]:
    """Signatures whose marker class matches no other signature."""
    plantable = []
    for signature in db:
        classes = ClassSet(app_id="marker", classes=frozenset({marker_class(signature)}), source="class_list")
        matched = {m.signature_id for m in match_trackers(classes, db).matches}
        if matched == {signature.signature_id}:
            plantable.append(signature)
    return plantable


def _check_leak(leak: LeakPlan, attribute: Optional[PersonaAttribute], taxonomy: Taxonomy) -> None:
    if taxonomy.entry(leak.data_type_id) is None or attribute is None:
        raise InvalidPlanError(f"no persona value for data type {leak.data_type_id!r}")
    numeric = leak.variant_kind == VariantKind.KEYED_NUMERIC
    if numeric != attribute.numeric:
        raise InvalidPlanError(f"{leak.data_type_id} cannot be planted as {leak.variant_kind.value}")
    value = attribute.values[0]
    if leak.variant_kind == VariantKind.PERCENT_ENCODED and percent_encode(value) == value:
        raise InvalidPlanError(f"{leak.data_type_id} has no percent-encoded form")
    if leak.variant_kind == VariantKind.PLAIN:
        if leak.location in (HitLocation.PATH, HitLocation.QUERY) and not is_url_safe(value):
            raise InvalidPlanError(f"{leak.data_type_id} is not URL-safe in plain form")
        if leak.location == HitLocation.HEADER and not (value.isascii() and value.isprintable()):
            raise InvalidPlanError(f"{leak.data_type_id} cannot be sent in a header")


# --- Request rendering ---

def _json_number(value: str) -> int | float:
    return float(value) if "." in value else int(value)


def _record(
    app_id: str,
    timestamp: int,
    method: str,
    url: str,
    headers: list[tuple[str, str]],
    body: bytes = b"",
    status: int = 200,
) -> dict:
    return {
        "app": app_id,
        "ts": timestamp,
        "method": method,
        "url": url,
        "headers": [list(header) for header in headers],
        "body_b64": base64.b64encode(body).decode("ascii"),
        "status": status,
    }


def _post(
    app_id: str,
    timestamp: int,
    host: str,
    path: str,
    query: str,
    extra_headers: list[tuple[str, str]],
    fields: dict,
    rng: random.Random,
    as_form: bool = False,
) -> dict:
    if as_form:
        body = "&".join(f"{key}={value}" for key, value in fields.items()).encode("ascii")
        content_type = "application/x-www-form-urlencoded"
    else:
        body = orjson.dumps(fields)
        content_type = "application/json"
    headers = [*_BASE_HEADERS, ("Content-Type", content_type), *extra_headers]
    if rng.random() < 0.25:
        body = gzip.compress(body, mtime=0)
        headers.append(("Content-Encoding", "gzip"))
    url = f"https://{host}{path}" + (f"?{query}" if query else "")
    return _record(app_id, timestamp, "POST", url, headers, body)


def _plant(
    app_id: str,
    timestamp: int,
    host: str,
    leak: LeakPlan,
    attribute: PersonaAttribute,
    decoys: DecoyWords,
) -> dict:
    """A POST carrying exactly one planted value at the leak's location."""
    value = attribute.values[0]
    fields: dict = decoys.fields()
    path, query, headers = "/api/collect", "", []

    if leak.variant_kind == VariantKind.KEYED_NUMERIC:
        hint = attribute.key_hints[0]
        if leak.location == HitLocation.PATH:
            path = f"/v1/{hint}/{value}"
        elif leak.location == HitLocation.QUERY:
            query = f"{hint}={value}"
        elif leak.location == HitLocation.HEADER:
            headers.append(("X-Metrics", f"{hint}={value}"))
        else:
            fields[hint] = _json_number(value)
    else:
        url_context = leak.location in (HitLocation.PATH, HitLocation.QUERY)
        token = encode_value(leak.variant_kind, value, url_context=url_context)
        if leak.location == HitLocation.PATH:
            path = f"/v1/p/{token}"
        elif leak.location == HitLocation.QUERY:
            query = f"d={token}"
        elif leak.location == HitLocation.HEADER:
            headers.append(("X-Token", token))
        else:
            fields["d"] = token
    return _post(app_id, timestamp, host, path, query, headers, fields, decoys.rng)


def _hosts_for(index: int, app_id: str, plan: AppPlan, tracker_pool: list[str]) -> tuple[list[str], list[str]]:
    if plan.contacts.tracker_hosts > len(tracker_pool):
        raise InvalidPlanError(f"{app_id}: only {len(tracker_pool)} tracker hosts are available")
    trackers = [tracker_pool[(index * 3 + j) % len(tracker_pool)] for j in range(plan.contacts.tracker_hosts)]
    slug = app_id.lower().replace(".", "-").replace("_", "-")
    first_party = [f"{NONTRACKER_HOST_PREFIXES[j]}.{slug}.example" for j in range(plan.contacts.nontracker_hosts)]
    return trackers, first_party


# --- Expected results ---

def _expected_scope(app_id: str, plan: AppPlan, policy: ExpectationPolicy, taxonomy: Taxonomy) -> list[ScopeFinding]:
    rule = policy.rules[plan.feature_category]
    transmitted = {taxonomy.by_id[leak.data_type_id].category for leak in plan.leaks}
    return [
        ScopeFinding(
            app_id=app_id,
            feature_category=plan.feature_category,
            data_category=category,
            transmitted=category in transmitted,
            in_scope=rule.allows(category),
        )
        for category in DataCategory
    ]


def _expected_verdicts(app_id: str, plan: AppPlan, taxonomy: Taxonomy) -> list[DeclarationVerdict]:
    observed: dict = {}
    for leak in plan.leaks:
        label = taxonomy.by_id[leak.data_type_id].label
        _, shared = observed.get(label, (False, False))
        observed[label] = (True, shared or leak.destination == HostLabel.TRACKER)
    verdicts = []
    for label in STUDY_LABELS:
        observed_collected, observed_shared = observed.get(label, (False, False))
        declared_collected, declared_shared = plan.labels.declared(label)
        verdicts.append(DeclarationVerdict(
            app_id=app_id,
            label=label,
            labels_published=plan.labels.published,
            observed_collected=observed_collected,
            observed_shared=observed_shared,
            declared_collected=declared_collected,
            declared_shared=declared_shared,
            verdicts=verdicts_for(observed_collected, observed_shared, declared_collected, declared_shared),
        ))
    return verdicts


# --- Generation ---

class _AppOutput:
    def __init__(self):
        self.captures: dict[CrawlKind, list[dict]] = {kind: [] for kind in CrawlKind}
        self.hits: list[PlantedHit] = []


def _generate_app(
    index: int,
    app_id: str,
    plan: AppPlan,
    default_decoys: int,
    persona: Persona,
    tracker_pool: list[str],
    decoys: DecoyWords,
) -> _AppOutput:
    output = _AppOutput()
    trackers, first_party = _hosts_for(index, app_id, plan, tracker_pool)
    used: set[str] = set()

    def _timestamp(kind: CrawlKind) -> int:
        offset = 500 if kind == CrawlKind.AUTOMATED else 0
        return BASE_TIMESTAMP + index * 1_000_000 + len(output.captures[kind]) * 1000 + offset

    for leak in plan.leaks:
        pool = trackers if leak.destination == HostLabel.TRACKER else first_party
        if not pool:
            raise InvalidPlanError(f"{app_id}: no {leak.destination.value} host for {leak.data_type_id}")
        host = pool[0]
        used.add(host)
        capture = output.captures[leak.crawl_kind]
        output.hits.append(PlantedHit(
            app_id=app_id,
            flow_id=f"{app_id}/{CAPTURE_FILES[leak.crawl_kind]}#{len(capture)}",
            data_type_id=leak.data_type_id,
            variant_kind=leak.variant_kind,
            location=leak.location,
            destination_host=host,
            host_label=leak.destination,
            crawl_kind=leak.crawl_kind,
        ))
        capture.append(_plant(app_id, _timestamp(leak.crawl_kind), host, leak, persona.attribute(leak.data_type_id), decoys))

    manual = output.captures[CrawlKind.MANUAL]
    decoy_count = plan.decoy_flows if plan.decoy_flows is not None else default_decoys
    if decoy_count:
        hosts = first_party or trackers
        if not hosts:
            raise InvalidPlanError(f"{app_id}: decoy requests need at least one host")
        used.add(hosts[0])
        for _ in range(decoy_count):
            as_form = decoys.rng.random() < 0.5
            manual.append(_post(
                app_id, _timestamp(CrawlKind.MANUAL), hosts[0], "/api/sync", "", [],
                decoys.fields(3), decoys.rng, as_form=as_form,
            ))

    every_host = trackers + first_party
    if every_host:
        uncovered = [host for host in every_host if host not in used]
        ordered = uncovered + [host for host in every_host if host in used]
        for position in range(max(plan.contacts.empty_requests, len(uncovered))):
            host = ordered[position % len(ordered)]
            manual.append(_record(
                app_id, _timestamp(CrawlKind.MANUAL), "GET", f"https://{host}/v2/config",
                list(_BASE_HEADERS), status=204,
            ))
    return output


def _app_ids(plans: tuple[AppPlan, ...]) -> list[str]:
    app_ids = [plan.app_id or f"org.fixture.app{index:03d}" for index, plan in enumerate(plans)]
    duplicates = sorted({app_id for app_id in app_ids if app_ids.count(app_id) > 1})
    if duplicates:
        raise InvalidPlanError(f"duplicate app ids: {', '.join(duplicates)}")
    return app_ids


def generate_corpus(config: FixtureConfig, out_dir: Path) -> FixtureCorpus:
    """Write a manifest-rooted corpus and its ground truth; same config, same bytes."""
    out_dir = Path(out_dir)
    taxonomy = load_default_taxonomy()
    persona = load_default_persona()
    policy = load_default_policy()
    db = load_default_signature_db()
    signatures = {signature.signature_id: signature for signature in db}
    tracker_pool = sorted(parse_hosts_list(read_packaged(RESOURCES["hosts"][0])).entries)

    plans = config.apps
    if not plans:
        plans = solve_targets(config.target_stats, plantable_signatures(db))
        logger.info("Solved target figures into %d app plans", len(plans))
    app_ids = _app_ids(plans)

    for app_id, plan in zip(app_ids, plans):
        unknown = sorted(set(plan.signature_ids) - set(signatures))
        if unknown:
            raise InvalidPlanError(f"{app_id}: unknown signature ids {', '.join(unknown)}")
        for leak in plan.leaks:
            _check_leak(leak, persona.attribute(leak.data_type_id), taxonomy)

    rng = random.Random(config.seed)
    decoys = DecoyWords(rng, persona, taxonomy)
    manifest_apps, embeddings, hits, scope, verdicts = [], [], [], [], []
    files: dict[str, bytes] = {}

    for index, (app_id, plan) in enumerate(zip(app_ids, plans)):
        classes = sorted({f"{app_id}.MainActivity", f"{app_id}.ui.SettingsFragment", *APP_CLASSES}
                         | {marker_class(signatures[s]) for s in plan.signature_ids})
        matched = {m.signature_id for m in match_trackers(
            ClassSet(app_id=app_id, classes=frozenset(classes), source="class_list"), db).matches}
        if matched != set(plan.signature_ids):
            extra = ", ".join(sorted(matched - set(plan.signature_ids)))
            raise InvalidPlanError(f"{app_id}: planted classes also match {extra}")

        output = _generate_app(index, app_id, plan, config.decoy_flow_count, persona, tracker_pool, decoys)
        app_dir = f"apps/{app_id}"
        files[f"{app_dir}/classes.txt"] = "".join(f"{name}\n" for name in classes).encode("utf-8")
        captures = []
        for kind, records in output.captures.items():
            if records:
                path = f"{app_dir}/{CAPTURE_FILES[kind]}"
                files[path] = b"".join(dumps_line(record) for record in records)
                captures.append({"path": path, "crawl_kind": kind.value})

        manifest_apps.append({
            "app_id": app_id,
            "display_name": f"Fixture app {index:03d}",
            "feature_category": plan.feature_category.value,
            "labels": plan.labels.model_dump(mode="json"),
            "artifact": f"{app_dir}/classes.txt",
            "captures": captures,
        })
        embeddings += [PlantedEmbedding(app_id=app_id, signature_id=s) for s in sorted(plan.signature_ids)]
        hits += output.hits
        scope += _expected_scope(app_id, plan, policy, taxonomy)
        verdicts += _expected_verdicts(app_id, plan, taxonomy)

    truth = GroundTruth(
        app_ids=tuple(sorted(app_ids)),
        embeddings=tuple(sorted(embeddings, key=lambda e: (e.app_id, e.signature_id))),
        hits=tuple(sorted(hits, key=lambda hit: hit.sort_key)),
        scope=tuple(scope),
        verdicts=tuple(verdicts),
    )
    manifest = {
        **{key: name for key, (_, name) in RESOURCES.items()},
        "apps": manifest_apps,
        "options": {},
    }

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for _, (packaged, name) in RESOURCES.items():
            (out_dir / name).write_bytes(read_packaged(packaged))
        for relative, content in files.items():
            path = out_dir / relative
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(content)
        write_json(out_dir / MANIFEST_FILE, manifest)
        write_json(out_dir / TRUTH_FILE, truth)
    except OSError as e:
        raise IoFailureError(f"cannot write fixture corpus to {out_dir}: {e.strerror or e}")

    logger.info(
        "Generated %d apps with %d planted transmissions in %s",
        len(app_ids), len(truth.hits), out_dir,
    )
    return FixtureCorpus(
        root=out_dir,
        manifest_path=out_dir / MANIFEST_FILE,
        truth_path=out_dir / TRUTH_FILE,
        truth=truth,
    )
