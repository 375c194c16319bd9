from functools import cached_property
from typing import NamedTuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from mhaudit.domains.common.enums import DataCategory, LabelCategory, Specificity

_STANDARD_LABELS = frozenset(
    {LabelCategory.DEVICE_OR_OTHER_IDS, LabelCategory.LOCATION, LabelCategory.PERSONAL_INFO}
)

# Labels a data category may map to; OTHER never describes an observed type.
ALLOWED_LABELS: dict[DataCategory, frozenset[LabelCategory]] = {
    DataCategory.DEVICE_IDS: _STANDARD_LABELS,
    DataCategory.LOCATION: _STANDARD_LABELS,
    DataCategory.USER_INFO: _STANDARD_LABELS,
    DataCategory.BODY_MEASUREMENTS: frozenset({LabelCategory.FITNESS_INFO}),
    DataCategory.FITNESS_INFO: frozenset({LabelCategory.FITNESS_INFO}),
    DataCategory.FEMALE_HEALTH_INFO: frozenset({LabelCategory.HEALTH_INFO}),
    DataCategory.MEDICAL_INFO: frozenset({LabelCategory.HEALTH_INFO}),
}


class TaxonomyEntry(BaseModel):
    """One leaf data type of the taxonomy document."""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    data_type_id: str = Field(alias="id", min_length=1)
    category: DataCategory
    label: LabelCategory
    display_name: str = Field(alias="name")

    @property
    def specificity(self) -> Specificity:
        return self.category.specificity


class TypeInfo(NamedTuple):
    category: DataCategory
    specificity: Specificity
    label: LabelCategory


class Taxonomy(BaseModel):
    """Validated data-type taxonomy; immutable after load."""
    model_config = ConfigDict(frozen=True)

    entries: tuple[TaxonomyEntry, ...]

    @model_validator(mode="after")
    def _check_invariants(self):
        seen = set()
        for entry in self.entries:
            if entry.data_type_id in seen:
                raise ValueError(f"duplicate data type id {entry.data_type_id!r}")
            seen.add(entry.data_type_id)
            if entry.label not in ALLOWED_LABELS[entry.category]:
                raise ValueError(
                    f"{entry.data_type_id!r}: label {entry.label.value} is inconsistent "
                    f"with category {entry.category.value}"
                )
        return self

    def ids(self) -> list[str]:
        return [entry.data_type_id for entry in self.entries]

    @cached_property
    def by_id(self) -> dict[str, TaxonomyEntry]:
        return {entry.data_type_id: entry for entry in self.entries}

    def entry(self, data_type_id: str) -> TaxonomyEntry | None:
        return self.by_id.get(data_type_id)

    def sort_key(self, data_type_id: str) -> tuple[int, int, str]:
        """Ordering used by type-level reports: specificity, category, id."""
        entry = self.entry(data_type_id)
        if entry is None:
            return (99, 99, data_type_id)
        categories = list(DataCategory)
        return (entry.specificity.rank, categories.index(entry.category), data_type_id)
