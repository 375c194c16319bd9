from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from mhaudit.domains.common.enums import (
    CrawlKind,
    FeatureCategory,
    HostMatchMode,
    LabelCategory,
    VariantKind,
)


class LabelDeclaration(BaseModel):
    """One privacy-label row: a category with its collected/shared flags."""
    model_config = ConfigDict(frozen=True)

    label: LabelCategory
    name: Optional[str] = None  # only for OTHER, e.g. "Financial info"
    collected: bool = False
    shared: bool = False

    @property
    def key(self) -> tuple[LabelCategory, Optional[str]]:
        return (self.label, self.name if self.label == LabelCategory.OTHER else None)


class PrivacyLabelSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    published: bool = False
    declarations: tuple[LabelDeclaration, ...] = ()

    @model_validator(mode="after")
    def _check_invariants(self):
        if not self.published and self.declarations:
            raise ValueError("unpublished label set cannot carry declarations")
        keys = [declaration.key for declaration in self.declarations]
        if len(keys) != len(set(keys)):
            raise ValueError("at most one declaration per label category")
        return self

    def declared(self, label: LabelCategory) -> tuple[bool, bool]:
        """Return (collected, shared) as declared for a study label."""
        for declaration in self.declarations:
            if declaration.label == label:
                return declaration.collected, declaration.shared
        return False, False


class CaptureRef(BaseModel):
    model_config = ConfigDict(frozen=True)

    path: Path
    crawl_kind: CrawlKind = CrawlKind.MANUAL


class AppRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    app_id: str = Field(min_length=1)
    display_name: str = ""
    feature_category: FeatureCategory
    labels: PrivacyLabelSet = PrivacyLabelSet()
    artifact_ref: Optional[Path] = None
    capture_refs: tuple[CaptureRef, ...] = ()

    @model_validator(mode="after")
    def _needs_an_input(self):
        if self.artifact_ref is None and not self.capture_refs:
            raise ValueError(f"app {self.app_id!r} has neither an artifact nor captures")
        return self


class ManifestOptions(BaseModel):
    """Per-manifest overrides; None falls back to settings."""
    host_match_mode: Optional[HostMatchMode] = None
    numeric_window: Optional[int] = Field(default=None, ge=1)
    output_dir: Optional[Path] = None
    variant_kinds: Optional[tuple[VariantKind, ...]] = None


class AuditManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    base_dir: Path
    taxonomy: Path
    hosts: Path
    signatures: Path
    persona: Optional[Path] = None
    policy: Optional[Path] = None
    psl: Optional[Path] = None
    apps: tuple[AppRecord, ...] = ()
    options: ManifestOptions = ManifestOptions()

    @model_validator(mode="after")
    def _unique_app_ids(self):
        app_ids = [app.app_id for app in self.apps]
        duplicates = sorted({app_id for app_id in app_ids if app_ids.count(app_id) > 1})
        if duplicates:
            raise ValueError(f"duplicate app ids: {', '.join(duplicates)}")
        return self
