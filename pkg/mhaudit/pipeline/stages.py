"""Pipeline stages.

Every stage writes its artifact under <output_dir>/stages/ and later stages
read artifacts back from disk, so running the stages one by one gives the
same bytes as a full run.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, TypeVar

from pydantic import BaseModel, ValidationError

from mhaudit.domains.apps.schemas import AppRecord
from mhaudit.domains.assess.schemas import DeclarationVerdict, ScopeFinding
from mhaudit.domains.assess.service import evaluate_labels, evaluate_scope, verdicts_csv
from mhaudit.domains.capture.service import load_app_flows
from mhaudit.domains.common.enums import DataCategory, STUDY_LABELS
from mhaudit.domains.common.exceptions import AuditError, EmptyCorpusError, IoFailureError, ManifestError
from mhaudit.domains.common.fields import LedgerEntry
from mhaudit.domains.common.jsonio import dumps_line, read_json, read_jsonl, write_json
from mhaudit.domains.detect.schemas import DetectionHit, DetectionSet
from mhaudit.domains.detect.service import rollup_hits, scan_corpus
from mhaudit.domains.hostclass.schemas import AppContacts
from mhaudit.domains.hostclass.service import label_flows, summarize_contacts
from mhaudit.domains.staticscan.schemas import ClassSet, EmbeddedTrackerReport
from mhaudit.domains.staticscan.service import extract_class_names, match_trackers
from mhaudit.domains.stats.report import render_report
from mhaudit.domains.stats.schemas import AppDetail, CorpusStats, EmbeddedSection
from mhaudit.domains.stats.service import (
    contact_stats,
    embedded_stats,
    label_accuracy,
    scope_matrix,
    transmission_stats,
)
from .state import AuditContext

logger = logging.getLogger(__name__)

EMBEDDED_ARTIFACT = "embedded.json"
CONTACTS_ARTIFACT = "contacts.json"
HITS_ARTIFACT = "hits.jsonl"
DETECTIONS_ARTIFACT = "detections.json"
FINDINGS_ARTIFACT = "findings.json"
VERDICTS_ARTIFACT = "verdicts.csv"

T = TypeVar("T")
M = TypeVar("M", bound=BaseModel)


class StageResult(BaseModel):
    stage: str
    written: tuple[Path, ...] = ()
    errors: tuple[LedgerEntry, ...] = ()


# --- Helpers ---

def _per_app(
    ctx: AuditContext,
    stage: str,
    work: Callable[[AppRecord], T],
    apps: Iterable[AppRecord] | None = None,
) -> tuple[list[T], list[LedgerEntry]]:
    """Run `work` for every app, keeping manifest order; failures go to the ledger."""

    def _run(app: AppRecord):
        try:
            return work(app), None
        except ManifestError:
            raise
        except (AuditError, OSError) as e:
            logger.warning("%s: %s failed: %s", app.app_id, stage, getattr(e, "detail", None) or e)
            return None, LedgerEntry.from_exception(app.app_id, stage, e)

    apps = list(ctx.apps if apps is None else apps)
    if ctx.jobs > 1:
        with ThreadPoolExecutor(max_workers=ctx.jobs) as pool:
            outcomes = list(pool.map(_run, apps))
    else:
        outcomes = [_run(app) for app in apps]
    results = [result for result, error in outcomes if error is None]
    errors = [error for _, error in outcomes if error is not None]
    return results, errors


def _write(path: Path, value) -> Path:
    try:
        write_json(path, value)
    except OSError as e:
        raise IoFailureError(f"cannot write {path}: {e.strerror or e}")
    return path


def _read(ctx: AuditContext, name: str, command: str):
    path = ctx.stage_path(name)
    if not path.is_file():
        raise ManifestError(f"{path} not found; run `mhaudit {command}` first")
    return read_json(path)


def _models(model: type[M], rows: list) -> list[M]:
    try:
        return [model.model_validate(row) for row in rows]
    except ValidationError as e:
        raise ManifestError(f"stage artifact holds an invalid {model.__name__}: {e.errors()[0]['msg']}")


def _errors(document: dict) -> list[LedgerEntry]:
    return _models(LedgerEntry, document.get("errors", []))


# --- scan-static ---

def _embedded_report(app: AppRecord, ctx: AuditContext) -> EmbeddedTrackerReport:
    if app.artifact_ref is None:
        classes = ClassSet(app_id=app.app_id, source="none")
    else:
        classes = extract_class_names(app.artifact_ref, app.app_id)
    return match_trackers(classes, ctx.signatures)


def scan_static(ctx: AuditContext) -> StageResult:
    """Embedded tracker libraries per app."""
    ctx.preload("signatures")
    reports, errors = _per_app(ctx, "scan-static", lambda app: _embedded_report(app, ctx))
    path = _write(ctx.stage_path(EMBEDDED_ARTIFACT), {"reports": reports, "errors": errors})
    logger.info("scan-static: %d apps, %d failed", len(reports), len(errors))
    return StageResult(stage="scan-static", written=(path,), errors=tuple(errors))


def load_embedded(ctx: AuditContext) -> tuple[list[EmbeddedTrackerReport], list[LedgerEntry]]:
    document = _read(ctx, EMBEDDED_ARTIFACT, "scan-static")
    return _models(EmbeddedTrackerReport, document.get("reports", [])), _errors(document)


# --- classify-hosts ---

def _app_contacts(app: AppRecord, ctx: AuditContext) -> AppContacts:
    flows = label_flows(load_app_flows(app), ctx.hosts, ctx.host_match_mode)
    return summarize_contacts(app.app_id, flows, ctx.psl)


def classify_hosts(ctx: AuditContext) -> StageResult:
    """Distinct contacted hosts per app, labelled tracker or non-tracker."""
    ctx.preload("hosts", "psl")
    contacts, errors = _per_app(ctx, "classify-hosts", lambda app: _app_contacts(app, ctx))
    path = _write(ctx.stage_path(CONTACTS_ARTIFACT), {"contacts": contacts, "errors": errors})
    logger.info("classify-hosts: %d apps, %d failed", len(contacts), len(errors))
    return StageResult(stage="classify-hosts", written=(path,), errors=tuple(errors))


def load_contacts(ctx: AuditContext) -> tuple[list[AppContacts], list[LedgerEntry]]:
    document = _read(ctx, CONTACTS_ARTIFACT, "classify-hosts")
    return _models(AppContacts, document.get("contacts", [])), _errors(document)


# --- detect ---

def detect(ctx: AuditContext) -> StageResult:
    """Persona values found in reviewable requests."""
    detections = scan_corpus(ctx.apps, ctx.matchers, ctx.hosts, ctx.host_match_mode, ctx.jobs)
    hits_path = ctx.stage_path(HITS_ARTIFACT)
    try:
        hits_path.parent.mkdir(parents=True, exist_ok=True)
        hits_path.write_bytes(b"".join(dumps_line(hit) for hit in detections.hits))
    except OSError as e:
        raise IoFailureError(f"cannot write {hits_path}: {e.strerror or e}")
    path = _write(
        ctx.stage_path(DETECTIONS_ARTIFACT),
        {"app_ids": detections.app_ids, "errors": detections.errors},
    )
    return StageResult(stage="detect", written=(hits_path, path), errors=detections.errors)


def load_detections(ctx: AuditContext) -> DetectionSet:
    document = _read(ctx, DETECTIONS_ARTIFACT, "detect")
    hits_path = ctx.stage_path(HITS_ARTIFACT)
    hits = _models(DetectionHit, read_jsonl(hits_path) if hits_path.is_file() else [])
    return DetectionSet(
        hits=tuple(hits),
        rollup=rollup_hits(hits),
        app_ids=tuple(document.get("app_ids", [])),
        errors=tuple(_errors(document)),
    )


# --- assess ---

def assess(ctx: AuditContext) -> StageResult:
    """Scope findings and label verdicts for every app that was scanned."""
    detections = load_detections(ctx)
    scanned = set(detections.app_ids)
    ctx.preload("policy", "taxonomy")

    def _assess(app: AppRecord) -> tuple[list[ScopeFinding], list[DeclarationVerdict]]:
        return (
            evaluate_scope(ctx.policy, detections, app, ctx.taxonomy),
            evaluate_labels(app, detections, ctx.taxonomy),
        )

    results, errors = _per_app(ctx, "assess", _assess, [app for app in ctx.apps if app.app_id in scanned])
    findings = [finding for app_findings, _ in results for finding in app_findings]
    verdicts = [verdict for _, app_verdicts in results for verdict in app_verdicts]
    path = _write(
        ctx.stage_path(FINDINGS_ARTIFACT),
        {"findings": findings, "verdicts": verdicts, "errors": errors},
    )
    csv_path = ctx.stage_path(VERDICTS_ARTIFACT)
    try:
        csv_path.write_bytes(verdicts_csv(verdicts))
    except OSError as e:
        raise IoFailureError(f"cannot write {csv_path}: {e.strerror or e}")
    return StageResult(stage="assess", written=(path, csv_path), errors=tuple(errors))


def load_findings(ctx: AuditContext) -> tuple[list[ScopeFinding], list[DeclarationVerdict], list[LedgerEntry]]:
    document = _read(ctx, FINDINGS_ARTIFACT, "assess")
    return (
        _models(ScopeFinding, document.get("findings", [])),
        _models(DeclarationVerdict, document.get("verdicts", [])),
        _errors(document),
    )


# --- report ---

def _details(
    ctx: AuditContext,
    reports: list[EmbeddedTrackerReport],
    contacts: list[AppContacts],
    detections: DetectionSet,
    findings: list[ScopeFinding],
    verdicts: list[DeclarationVerdict],
) -> list[AppDetail]:
    reports_by_app = {report.app_id: report for report in reports}
    contacts_by_app = {entry.app_id: entry for entry in contacts}
    details = []
    for app in ctx.apps:
        report = reports_by_app.get(app.app_id)
        contacted = contacts_by_app.get(app.app_id)
        out_of_scope = {
            f.data_category for f in findings
            if f.app_id == app.app_id and f.transmitted and not f.in_scope
        }
        undeclared = {v.label for v in verdicts if v.app_id == app.app_id and v.undeclared}
        details.append(AppDetail(
            app_id=app.app_id,
            display_name=app.display_name,
            feature_category=app.feature_category,
            trackers=tuple(report.tracker_names) if report else (),
            tracker_hosts=contacted.tracker_hosts if contacted else 0,
            nontracker_hosts=contacted.nontracker_hosts if contacted else 0,
            data_types=tuple(sorted(detections.flags(app.app_id), key=ctx.taxonomy.sort_key)),
            out_of_scope=tuple(c for c in DataCategory if c in out_of_scope),
            undeclared_labels=tuple(label for label in STUDY_LABELS if label in undeclared),
        ))
    return details


def merge_ledgers(*ledgers: Iterable[LedgerEntry]) -> list[LedgerEntry]:
    merged = {(e.app_id, e.stage, e.error, e.detail): e for ledger in ledgers for e in ledger}
    return [merged[key] for key in sorted(merged)]


def report(ctx: AuditContext) -> StageResult:
    """Aggregate the stage artifacts into the report bundle."""
    reports, embedded_errors = load_embedded(ctx)
    contacts, contact_errors = load_contacts(ctx)
    detections = load_detections(ctx)
    findings, verdicts, assess_errors = load_findings(ctx)
    ledger = merge_ledgers(embedded_errors, contact_errors, detections.errors, assess_errors)

    try:
        embedded = embedded_stats(reports)
    except EmptyCorpusError:
        logger.warning("No embedded-tracker reports; the embedded section stays empty")
        embedded = EmbeddedSection()

    stats = CorpusStats(
        app_count=len(ctx.apps),
        embedded=embedded,
        contacted=contact_stats(contacts),
        transmissions=transmission_stats(detections, ctx.taxonomy, detections.app_ids),
        scope_matrix=scope_matrix(findings, ctx.policy),
        label_accuracy=label_accuracy(verdicts),
        errors=tuple(ledger),
    )
    details = _details(ctx, reports, contacts, detections, findings, verdicts)
    written = render_report(stats, details, ctx.output_dir)
    return StageResult(stage="report", written=tuple(written), errors=tuple(ledger))
