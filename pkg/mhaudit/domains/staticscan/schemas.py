from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ClassSet(BaseModel):
    """Dotted class names extracted from one app artifact."""
    model_config = ConfigDict(frozen=True)

    app_id: str
    classes: frozenset[str] = frozenset()
    source: str = "type_ids"  # "type_ids" (defined + referenced types) or "class_list"
    warnings: tuple[str, ...] = ()

    @field_validator("classes")
    @classmethod
    def _dotted_form(cls, classes: frozenset[str]) -> frozenset[str]:
        for name in classes:
            if "/" in name or (name.startswith("L") and name.endswith(";")):
                raise ValueError(f"class name not normalized: {name!r}")
        return classes


class TrackerSignature(BaseModel):
    model_config = ConfigDict(frozen=True)

    signature_id: str = Field(min_length=1)
    tracker_name: str
    vendor: str
    code_prefixes: tuple[str, ...]

    @field_validator("code_prefixes")
    @classmethod
    def _valid_prefixes(cls, prefixes: tuple[str, ...]) -> tuple[str, ...]:
        if not prefixes:
            raise ValueError("code_prefixes must not be empty")
        for prefix in prefixes:
            if "." not in prefix:
                raise ValueError(f"prefix {prefix!r} has no package separator")
        return prefixes


class TrackerMatch(BaseModel):
    model_config = ConfigDict(frozen=True)

    signature_id: str
    tracker_name: str
    vendor: str
    matched_prefix: str
    example_class: str


class EmbeddedTrackerReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    app_id: str
    matches: tuple[TrackerMatch, ...] = ()
    distinct_trackers: int = 0
    distinct_vendors: int = 0
    class_source: str = "type_ids"
    class_count: int = 0

    @model_validator(mode="after")
    def _counts_agree(self):
        if self.distinct_trackers != len({m.signature_id for m in self.matches}):
            raise ValueError("distinct_trackers disagrees with matches")
        if self.distinct_vendors != len({m.vendor for m in self.matches}):
            raise ValueError("distinct_vendors disagrees with matches")
        return self

    @property
    def tracker_names(self) -> list[str]:
        return sorted({m.tracker_name for m in self.matches})
