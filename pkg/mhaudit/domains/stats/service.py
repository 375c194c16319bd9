import logging
from collections import Counter
from typing import Iterable

from mhaudit.domains.assess.schemas import DeclarationVerdict, ExpectationPolicy, ScopeFinding
from mhaudit.domains.common.enums import (
    STUDY_LABELS,
    CrawlKind,
    DataCategory,
    FeatureCategory,
    Specificity,
    Verdict,
)
from mhaudit.domains.common.exceptions import EmptyCorpusError
from mhaudit.domains.common.fields import percent
from mhaudit.domains.detect.schemas import DetectionSet
from mhaudit.domains.hostclass.schemas import AppContacts
from mhaudit.domains.staticscan.schemas import EmbeddedTrackerReport
from mhaudit.domains.taxonomy.schemas import Taxonomy
from .schemas import (
    AppContactRow,
    ContactSection,
    EmbeddedSection,
    LabelRow,
    LabelSection,
    RankEntry,
    ScopeCell,
    ScopeMatrix,
    ScopeRow,
    SpecificityTransmissions,
    TransmissionSection,
    TypeTransmissions,
)

logger = logging.getLogger(__name__)


def rank(counts: Counter, app_count: int) -> tuple[RankEntry, ...]:
    """Count desc, then name asc."""
    ordered = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return tuple(
        RankEntry(name=name, app_count=count, pct_apps=percent(count, app_count))
        for name, count in ordered
    )


# --- Embedded trackers ---

def embedded_stats(reports: list[EmbeddedTrackerReport]) -> EmbeddedSection:
    if not reports:
        raise EmptyCorpusError("no embedded-tracker reports")
    app_count = len(reports)
    with_tracker = sum(1 for report in reports if report.distinct_trackers > 0)
    total = sum(report.distinct_trackers for report in reports)

    libraries: Counter = Counter()
    vendors: set[str] = set()
    for report in reports:
        libraries.update(report.tracker_names)
        vendors |= {match.vendor for match in report.matches}

    return EmbeddedSection(
        app_count=app_count,
        apps_with_tracker=with_tracker,
        pct_apps_with_tracker=percent(with_tracker, app_count),
        total_embeddings=total,
        mean_trackers_per_app=round(total / app_count, 2),
        distinct_trackers=len(libraries),
        distinct_vendors=len(vendors),
        library_ranking=rank(libraries, app_count),
    )


# --- Contacted hosts ---

def contact_stats(contacts: list[AppContacts]) -> ContactSection:
    app_count = len(contacts)
    domains: Counter = Counter()
    hosts: set[str] = set()
    all_domains: set[str] = set()
    tracker_domains: set[str] = set()
    rows = []
    for app in contacts:
        domains.update(app.domains)
        hosts |= {contact.host for contact in app.hosts}
        all_domains |= app.domains
        tracker_domains |= app.tracker_domains
        rows.append(AppContactRow(
            app_id=app.app_id,
            tracker_hosts=app.tracker_hosts,
            nontracker_hosts=app.nontracker_hosts,
            tracker_domains=len(app.tracker_domains),
        ))
    rows.sort(key=lambda row: (-row.tracker_hosts, row.app_id))

    total_requests = sum(app.total_requests for app in contacts)
    reviewable = sum(app.reviewable_requests for app in contacts)
    return ContactSection(
        app_count=app_count,
        per_app=tuple(rows),
        domain_ranking=rank(domains, app_count),
        apps_more_trackers=sum(1 for row in rows if row.tracker_hosts > row.nontracker_hosts),
        apps_zero_trackers=sum(1 for row in rows if row.tracker_hosts == 0),
        unique_hosts=len(hosts),
        unique_domains=len(all_domains),
        tracker_domains=len(tracker_domains),
        total_requests=total_requests,
        reviewable_requests=reviewable,
        pct_reviewable=percent(reviewable, total_requests),
    )


# --- Transmissions ---

def transmission_stats(
    rollup: DetectionSet,
    taxonomy: Taxonomy,
    app_ids: Iterable[str],
) -> TransmissionSection:
    """App counts per data type and destination, and per specificity and crawl kind."""
    app_ids = sorted(set(app_ids))
    app_count = len(app_ids)
    non_tracker: Counter = Counter()
    tracker: Counter = Counter()
    transmitting: Counter = Counter()
    by_kind: dict[tuple[Specificity, CrawlKind], set[str]] = {}
    by_specificity: dict[Specificity, set[str]] = {s: set() for s in Specificity}

    for app_id in app_ids:
        for data_type_id, flags in rollup.flags(app_id).items():
            non_tracker[data_type_id] += flags.to_non_tracker
            tracker[data_type_id] += flags.to_tracker
            transmitting[data_type_id] += 1
            by_specificity[taxonomy.by_id[data_type_id].specificity].add(app_id)
        for crawl_kind in CrawlKind:
            for data_type_id in rollup.flags(app_id, crawl_kind):
                specificity = taxonomy.by_id[data_type_id].specificity
                by_kind.setdefault((specificity, crawl_kind), set()).add(app_id)

    by_type = tuple(
        TypeTransmissions(
            data_type_id=entry.data_type_id,
            category=entry.category,
            specificity=entry.specificity,
            non_tracker_apps=non_tracker[entry.data_type_id],
            tracker_apps=tracker[entry.data_type_id],
            transmitting_apps=transmitting[entry.data_type_id],
        )
        for entry in sorted(taxonomy.entries, key=lambda e: taxonomy.sort_key(e.data_type_id))
    )
    per_kind = tuple(
        SpecificityTransmissions(
            specificity=specificity,
            crawl_kind=crawl_kind,
            apps=len(by_kind.get((specificity, crawl_kind), ())),
            pct_apps=percent(len(by_kind.get((specificity, crawl_kind), ())), app_count),
        )
        for specificity in Specificity
        for crawl_kind in CrawlKind
    )
    return TransmissionSection(
        app_count=app_count,
        by_type=by_type,
        by_specificity=per_kind,
        apps_by_specificity={s: len(apps) for s, apps in by_specificity.items()},
        pct_apps_by_specificity={s: percent(len(apps), app_count) for s, apps in by_specificity.items()},
    )


# --- Expectation ---

def scope_matrix(findings: Iterable[ScopeFinding], policy: ExpectationPolicy) -> ScopeMatrix:
    """Feature category x data category app counts with in-scope flags from the policy."""
    apps: dict[FeatureCategory, set[str]] = {c: set() for c in FeatureCategory}
    cells: Counter = Counter()
    location_apps: set[str] = set()
    location_out: set[str] = set()
    above_specificity: set[str] = set()

    for finding in findings:
        apps[finding.feature_category].add(finding.app_id)
        if not finding.transmitted:
            continue
        cells[(finding.feature_category, finding.data_category)] += 1
        if finding.data_category == DataCategory.LOCATION:
            location_apps.add(finding.app_id)
            if not finding.in_scope:
                location_out.add(finding.app_id)
        elif not finding.in_scope:
            above_specificity.add(finding.app_id)

    rows = []
    for feature in FeatureCategory:
        rule = policy.rules[feature]
        rows.append(ScopeRow(
            feature_category=feature,
            apps=len(apps[feature]),
            cells=tuple(
                ScopeCell(data_category=category, app_count=cells[(feature, category)], in_scope=rule.allows(category))
                for category in DataCategory
            ),
        ))
    app_count = sum(len(ids) for ids in apps.values())
    within = app_count - len(above_specificity)
    return ScopeMatrix(
        rows=tuple(rows),
        app_count=app_count,
        apps_within_specificity=within,
        pct_apps_within_specificity=percent(within, app_count),
        apps_transmitting_location=len(location_apps),
        apps_location_out_of_scope=len(location_out),
    )


# --- Declaration ---

def label_accuracy(verdicts: Iterable[DeclarationVerdict]) -> LabelSection:
    counts: dict = {label: Counter() for label in STUDY_LABELS}
    apps: set[str] = set()
    unpublished: set[str] = set()
    share_without_collect: set[str] = set()
    undeclared: set[str] = set()

    for verdict in verdicts:
        apps.add(verdict.app_id)
        if not verdict.labels_published:
            unpublished.add(verdict.app_id)
        if verdict.declared_shared and not verdict.declared_collected:
            share_without_collect.add(verdict.app_id)
        if verdict.undeclared:
            undeclared.add(verdict.app_id)
        counts[verdict.label].update(verdict.verdicts)

    rows = tuple(
        LabelRow(
            label=label,
            declared_ok_collect=counts[label][Verdict.CORRECT_COLLECTION],
            undeclared_collect=counts[label][Verdict.UNDECLARED_COLLECTION],
            declared_ok_share=counts[label][Verdict.CORRECT_SHARING],
            undeclared_share=counts[label][Verdict.UNDECLARED_SHARING],
            unobserved_declarations=counts[label][Verdict.UNOBSERVED_DECLARATION],
        )
        for label in STUDY_LABELS
    )
    app_count = len(apps)
    return LabelSection(
        app_count=app_count,
        rows=rows,
        apps_without_labels=len(unpublished),
        pct_apps_without_labels=percent(len(unpublished), app_count),
        apps_share_without_collect=len(share_without_collect),
        pct_apps_share_without_collect=percent(len(share_without_collect), app_count),
        apps_with_undeclared=len(undeclared),
        pct_apps_with_undeclared=percent(len(undeclared), app_count),
    )
