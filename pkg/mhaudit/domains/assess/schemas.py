from pydantic import BaseModel, ConfigDict, field_serializer, model_validator

from mhaudit.domains.common.enums import (
    DataCategory,
    FeatureCategory,
    LabelCategory,
    Specificity,
    Verdict,
)


class ScopeRule(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_specificity: Specificity
    location_in_scope: bool = False

    def allows(self, category: DataCategory) -> bool:
        if category == DataCategory.LOCATION:
            return self.location_in_scope
        return category.specificity.rank <= self.max_specificity.rank


class ExpectationPolicy(BaseModel):
    """Expected data scope per feature category."""
    model_config = ConfigDict(frozen=True)

    rules: dict[FeatureCategory, ScopeRule]

    @model_validator(mode="after")
    def _all_categories(self):
        missing = [c.value for c in FeatureCategory if c not in self.rules]
        if missing:
            raise ValueError(f"policy has no rule for: {', '.join(missing)}")
        return self


class ScopeFinding(BaseModel):
    model_config = ConfigDict(frozen=True)

    app_id: str
    feature_category: FeatureCategory
    data_category: DataCategory
    transmitted: bool
    in_scope: bool


class DeclarationVerdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    app_id: str
    label: LabelCategory
    labels_published: bool = True
    observed_collected: bool
    observed_shared: bool
    declared_collected: bool
    declared_shared: bool
    verdicts: frozenset[Verdict]

    @model_validator(mode="after")
    def _sharing_implies_collection(self):
        if self.observed_shared and not self.observed_collected:
            raise ValueError("observed sharing implies observed collection")
        return self

    @field_serializer("verdicts")
    def _sorted_verdicts(self, verdicts: frozenset[Verdict]) -> list[str]:
        return sorted(v.value for v in verdicts)

    @property
    def undeclared(self) -> bool:
        return bool(self.verdicts & {Verdict.UNDECLARED_COLLECTION, Verdict.UNDECLARED_SHARING})
