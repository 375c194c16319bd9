from typing import Optional

from pydantic import BaseModel, ConfigDict

from mhaudit.domains.common.enums import (
    CrawlKind,
    DataCategory,
    FeatureCategory,
    LabelCategory,
    Specificity,
)
from mhaudit.domains.common.fields import Count, LedgerEntry, Percentage


class RankEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    app_count: Count
    pct_apps: Percentage


class EmbeddedSection(BaseModel):
    model_config = ConfigDict(frozen=True)

    app_count: Count = 0
    apps_with_tracker: Count = 0
    pct_apps_with_tracker: Percentage = 0.0
    total_embeddings: Count = 0
    mean_trackers_per_app: float = 0.0
    distinct_trackers: Count = 0
    distinct_vendors: Count = 0
    library_ranking: tuple[RankEntry, ...] = ()


class AppContactRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    app_id: str
    tracker_hosts: Count
    nontracker_hosts: Count
    tracker_domains: Count


class ContactSection(BaseModel):
    model_config = ConfigDict(frozen=True)

    app_count: Count = 0
    per_app: tuple[AppContactRow, ...] = ()
    domain_ranking: tuple[RankEntry, ...] = ()
    apps_more_trackers: Count = 0
    apps_zero_trackers: Count = 0
    unique_hosts: Count = 0
    unique_domains: Count = 0
    tracker_domains: Count = 0
    total_requests: Count = 0
    reviewable_requests: Count = 0
    pct_reviewable: Percentage = 0.0


class TypeTransmissions(BaseModel):
    model_config = ConfigDict(frozen=True)

    data_type_id: str
    category: DataCategory
    specificity: Specificity
    non_tracker_apps: Count
    tracker_apps: Count
    transmitting_apps: Count


class SpecificityTransmissions(BaseModel):
    model_config = ConfigDict(frozen=True)

    specificity: Specificity
    crawl_kind: CrawlKind
    apps: Count
    pct_apps: Percentage


class TransmissionSection(BaseModel):
    model_config = ConfigDict(frozen=True)

    app_count: Count = 0
    by_type: tuple[TypeTransmissions, ...] = ()
    by_specificity: tuple[SpecificityTransmissions, ...] = ()
    # union of crawl kinds
    apps_by_specificity: dict[Specificity, int] = {}
    pct_apps_by_specificity: dict[Specificity, float] = {}

    def specificity_count(self, specificity: Specificity, crawl_kind: CrawlKind) -> int:
        for row in self.by_specificity:
            if row.specificity == specificity and row.crawl_kind == crawl_kind:
                return row.apps
        return 0


class ScopeCell(BaseModel):
    model_config = ConfigDict(frozen=True)

    data_category: DataCategory
    app_count: Count
    in_scope: bool


class ScopeRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    feature_category: FeatureCategory
    apps: Count
    cells: tuple[ScopeCell, ...]

    def cell(self, category: DataCategory) -> ScopeCell:
        return next(cell for cell in self.cells if cell.data_category == category)

    @property
    def out_of_scope(self) -> list[DataCategory]:
        return [cell.data_category for cell in self.cells if not cell.in_scope]


class ScopeMatrix(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: tuple[ScopeRow, ...] = ()
    app_count: Count = 0
    apps_within_specificity: Count = 0
    pct_apps_within_specificity: Percentage = 0.0
    apps_transmitting_location: Count = 0
    apps_location_out_of_scope: Count = 0

    def row(self, category: FeatureCategory) -> Optional[ScopeRow]:
        return next((row for row in self.rows if row.feature_category == category), None)


class LabelRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: LabelCategory
    declared_ok_collect: Count = 0
    undeclared_collect: Count = 0
    declared_ok_share: Count = 0
    undeclared_share: Count = 0
    unobserved_declarations: Count = 0

    @property
    def share_declared_ratio(self) -> float:
        total = self.declared_ok_share + self.undeclared_share
        return self.declared_ok_share / total if total else 0.0


class LabelSection(BaseModel):
    model_config = ConfigDict(frozen=True)

    app_count: Count = 0
    rows: tuple[LabelRow, ...] = ()
    apps_without_labels: Count = 0
    pct_apps_without_labels: Percentage = 0.0
    apps_share_without_collect: Count = 0
    pct_apps_share_without_collect: Percentage = 0.0
    apps_with_undeclared: Count = 0
    pct_apps_with_undeclared: Percentage = 0.0

    def row(self, label: LabelCategory) -> LabelRow:
        return next(row for row in self.rows if row.label == label)


class CorpusStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    app_count: Count = 0
    embedded: EmbeddedSection = EmbeddedSection()
    contacted: ContactSection = ContactSection()
    transmissions: TransmissionSection = TransmissionSection()
    scope_matrix: ScopeMatrix = ScopeMatrix()
    label_accuracy: LabelSection = LabelSection()
    errors: tuple[LedgerEntry, ...] = ()


class AppDetail(BaseModel):
    """Per-app lines of report.md."""
    model_config = ConfigDict(frozen=True)

    app_id: str
    display_name: str = ""
    feature_category: FeatureCategory
    trackers: tuple[str, ...] = ()
    tracker_hosts: Count = 0
    nontracker_hosts: Count = 0
    data_types: tuple[str, ...] = ()
    out_of_scope: tuple[DataCategory, ...] = ()
    undeclared_labels: tuple[LabelCategory, ...] = ()
