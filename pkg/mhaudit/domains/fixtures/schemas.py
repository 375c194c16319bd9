from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator

from mhaudit.domains.apps.schemas import PrivacyLabelSet
from mhaudit.domains.assess.schemas import DeclarationVerdict, ScopeFinding
from mhaudit.domains.common.enums import (
    CrawlKind,
    FeatureCategory,
    HitLocation,
    HostLabel,
    VariantKind,
)
from mhaudit.domains.detect.schemas import DetectionHit

# first labels of the first-party hosts a fixture app may contact
NONTRACKER_HOST_PREFIXES = ("api", "cdn", "auth", "static", "media")


# --- Plans ---

class LeakPlan(BaseModel):
    """One planted transmission; each leak gets a request of its own."""
    model_config = ConfigDict(frozen=True)

    data_type_id: str = Field(min_length=1)
    variant_kind: VariantKind = VariantKind.PLAIN
    location: HitLocation = HitLocation.BODY
    destination: HostLabel = HostLabel.NON_TRACKER
    crawl_kind: CrawlKind = CrawlKind.MANUAL


class ContactPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    tracker_hosts: int = Field(default=1, ge=0)
    nontracker_hosts: int = Field(default=1, ge=0, le=len(NONTRACKER_HOST_PREFIXES))
    empty_requests: int = Field(default=0, ge=0)  # zero-length GETs


class AppPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    app_id: Optional[str] = None
    feature_category: FeatureCategory
    signature_ids: tuple[str, ...] = ()
    leaks: tuple[LeakPlan, ...] = ()
    labels: PrivacyLabelSet = PrivacyLabelSet()
    contacts: ContactPlan = ContactPlan()
    decoy_flows: Optional[int] = Field(default=None, ge=0)  # None: the corpus default

    @model_validator(mode="after")
    def _unique_signatures(self):
        if len(self.signature_ids) != len(set(self.signature_ids)):
            raise ValueError("signature ids must be unique per app")
        return self


class TargetStats(BaseModel):
    """Published corpus figures that a plan is solved to reproduce."""
    model_config = ConfigDict(frozen=True)

    app_count: int = Field(ge=1)
    pct_apps_with_tracker: float = Field(ge=0.0, le=100.0)
    mean_trackers_per_app: float = Field(ge=0.0)
    pct_apps_top_tracker: float = Field(ge=0.0, le=100.0)
    total_requests: int = Field(ge=0)
    reviewable_requests: int = Field(ge=0)
    apps_more_trackers: int = Field(ge=0)
    apps_zero_trackers: int = Field(ge=0)
    pct_apps_standard: float = Field(ge=0.0, le=100.0)
    pct_apps_nonstandard: float = Field(ge=0.0, le=100.0)
    pct_apps_medical: float = Field(ge=0.0, le=100.0)
    pct_apps_without_labels: float = Field(default=0.0, ge=0.0, le=100.0)
    pct_apps_share_without_collect: float = Field(default=0.0, ge=0.0, le=100.0)

    @model_validator(mode="after")
    def _consistent(self):
        if self.reviewable_requests > self.total_requests:
            raise ValueError("reviewable requests exceed total requests")
        if self.apps_more_trackers + self.apps_zero_trackers > self.app_count:
            raise ValueError("contact targets exceed the app count")
        if self.pct_apps_top_tracker > self.pct_apps_with_tracker:
            raise ValueError("top tracker cannot be more common than any tracker")
        return self


class FixtureConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = Field(default=0, ge=0, lt=2**64)
    apps: tuple[AppPlan, ...] = ()
    decoy_flow_count: int = Field(default=2, ge=0)  # reviewable decoy requests per app
    target_stats: Optional[TargetStats] = None

    @model_validator(mode="after")
    def _has_apps(self):
        if not self.apps and self.target_stats is None:
            raise ValueError("a fixture needs app plans or target_stats")
        return self


# --- Ground truth ---

class PlantedEmbedding(BaseModel):
    model_config = ConfigDict(frozen=True)

    app_id: str
    signature_id: str


class PlantedHit(BaseModel):
    model_config = ConfigDict(frozen=True)

    app_id: str
    flow_id: str
    data_type_id: str
    variant_kind: VariantKind
    location: HitLocation
    destination_host: str
    host_label: HostLabel
    crawl_kind: CrawlKind

    @property
    def key(self) -> tuple[str, str, VariantKind, HitLocation]:
        return (self.flow_id, self.data_type_id, self.variant_kind, self.location)

    @property
    def sort_key(self) -> tuple:
        return (self.app_id, self.flow_id, self.data_type_id, self.variant_kind.value, self.location.value)


class GroundTruth(BaseModel):
    """Exactly what the pipeline must recover from a generated corpus."""
    model_config = ConfigDict(frozen=True)

    app_ids: tuple[str, ...]
    embeddings: tuple[PlantedEmbedding, ...] = ()
    hits: tuple[PlantedHit, ...] = ()
    scope: tuple[ScopeFinding, ...] = ()
    verdicts: tuple[DeclarationVerdict, ...] = ()

    @model_validator(mode="after")
    def _unique_hits(self):
        keys = [hit.key for hit in self.hits]
        if len(keys) != len(set(keys)):
            raise ValueError("duplicate planted hits")
        return self


class FixtureCorpus(BaseModel):
    model_config = ConfigDict(frozen=True)

    root: Path
    manifest_path: Path
    truth_path: Path
    truth: GroundTruth


# --- Evaluation ---

class VariantScore(BaseModel):
    model_config = ConfigDict(frozen=True)

    variant_kind: VariantKind
    planted: int
    recovered: int

    @computed_field
    @property
    def recall(self) -> float:
        return self.recovered / self.planted if self.planted else 1.0


class DetectorEvaluation(BaseModel):
    model_config = ConfigDict(frozen=True)

    planted: int
    reported: int
    true_hits: int
    recall: float
    precision: float
    per_variant: tuple[VariantScore, ...]
    missed: tuple[PlantedHit, ...] = ()
    spurious: tuple[DetectionHit, ...] = ()

    def variant(self, kind: VariantKind) -> VariantScore:
        return next(score for score in self.per_variant if score.variant_kind == kind)
