from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from mhaudit.domains.common.enums import CrawlKind, HitLocation, HostLabel, VariantKind
from mhaudit.domains.common.fields import LedgerEntry


class PersonaAttribute(BaseModel):
    model_config = ConfigDict(frozen=True)

    data_type_id: str = Field(min_length=1)
    values: tuple[str, ...]
    numeric: bool = False
    key_hints: tuple[str, ...] = ()

    @model_validator(mode="after")
    def _check_invariants(self):
        if not self.values or not all(v.strip() for v in self.values):
            raise ValueError(f"{self.data_type_id}: values must be non-empty")
        if self.numeric:
            if not self.key_hints:
                raise ValueError(f"{self.data_type_id}: numeric attributes need at least one key hint")
            for value in self.values:
                float(value)
        return self


class Persona(BaseModel):
    """Synthetic user profile whose known values seed leak detection."""
    model_config = ConfigDict(frozen=True)

    attributes: tuple[PersonaAttribute, ...]

    def attribute(self, data_type_id: str) -> Optional[PersonaAttribute]:
        for attribute in self.attributes:
            if attribute.data_type_id == data_type_id:
                return attribute
        return None


class Matcher(BaseModel):
    model_config = ConfigDict(frozen=True)

    data_type_id: str
    variant_kind: VariantKind
    needle: str
    case_insensitive: bool = False
    digit_bounded: bool = False  # all-digit needles must not sit inside a longer alphanumeric run
    key_hints: tuple[str, ...] = ()  # KeyedNumeric only


class MatcherSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    matchers: tuple[Matcher, ...]
    numeric_window: int = Field(default=32, ge=1)

    def kinds(self) -> set[VariantKind]:
        return {m.variant_kind for m in self.matchers}


class DetectionHit(BaseModel):
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


class TransmissionFlags(BaseModel):
    """Whether a data type ever went to a non-tracker and/or a tracker destination."""
    model_config = ConfigDict(frozen=True)

    to_non_tracker: bool = False
    to_tracker: bool = False

    @property
    def collected(self) -> bool:
        return self.to_non_tracker or self.to_tracker

    @property
    def shared(self) -> bool:
        return self.to_tracker

    def merge(self, other: "TransmissionFlags") -> "TransmissionFlags":
        return TransmissionFlags(
            to_non_tracker=self.to_non_tracker or other.to_non_tracker,
            to_tracker=self.to_tracker or other.to_tracker,
        )


# app_id -> crawl_kind -> data_type_id -> flags
Rollup = dict[str, dict[CrawlKind, dict[str, TransmissionFlags]]]


class DetectionSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    hits: tuple[DetectionHit, ...] = ()
    rollup: Rollup = {}
    app_ids: tuple[str, ...] = ()  # every app scanned, with or without hits
    errors: tuple[LedgerEntry, ...] = ()

    @field_validator("hits")
    @classmethod
    def _unique_hits(cls, hits: tuple[DetectionHit, ...]) -> tuple[DetectionHit, ...]:
        keys = [hit.key for hit in hits]
        if len(keys) != len(set(keys)):
            raise ValueError("duplicate detection hits")
        return hits

    def flags(self, app_id: str, crawl_kind: Optional[CrawlKind] = None) -> dict[str, TransmissionFlags]:
        """Per data type flags for one app; crawl kinds are merged when none is given."""
        per_kind = self.rollup.get(app_id, {})
        if crawl_kind is not None:
            return dict(per_kind.get(crawl_kind, {}))
        merged: dict[str, TransmissionFlags] = {}
        for kind in sorted(per_kind, key=lambda k: k.value):
            for data_type_id, flags in per_kind[kind].items():
                merged[data_type_id] = merged[data_type_id].merge(flags) if data_type_id in merged else flags
        return merged
