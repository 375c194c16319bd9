from __future__ import annotations

import orjson
import pytest

from mhaudit.domains.common.enums import DataCategory, LabelCategory, Specificity
from mhaudit.domains.common.exceptions import MalformedTaxonomyError, UnknownDataTypeError
from mhaudit.domains.taxonomy.service import lookup, parse_taxonomy


def _document(*entries: dict) -> bytes:
    return orjson.dumps(list(entries))


def test_default_taxonomy_resolves_known_types(taxonomy):
    assert lookup(taxonomy, "advertising_id") == (
        DataCategory.DEVICE_IDS,
        Specificity.STANDARD,
        LabelCategory.DEVICE_OR_OTHER_IDS,
    )
    assert lookup(taxonomy, "menstrual_cycle") == (
        DataCategory.FEMALE_HEALTH_INFO,
        Specificity.MEDICAL,
        LabelCategory.HEALTH_INFO,
    )
    assert lookup(taxonomy, "body_weight").specificity == Specificity.NONSTANDARD


def test_every_persona_type_is_in_the_taxonomy(taxonomy, persona):
    for attribute in persona.attributes:
        assert taxonomy.entry(attribute.data_type_id) is not None


def test_unknown_type_is_rejected(taxonomy):
    with pytest.raises(UnknownDataTypeError):
        lookup(taxonomy, "unknown_xyz")


def test_camel_case_spellings_are_accepted():
    taxonomy = parse_taxonomy(_document(
        {"id": "body_weight", "category": "BodyMeasurements", "label": "FitnessInfo", "name": "Weight"},
    ))
    entry = taxonomy.entry("body_weight")
    assert entry.category == DataCategory.BODY_MEASUREMENTS
    assert entry.label == LabelCategory.FITNESS_INFO


def test_inconsistent_label_is_malformed():
    with pytest.raises(MalformedTaxonomyError):
        parse_taxonomy(_document(
            {"id": "body_weight", "category": "medical_info", "label": "fitness_info"},
        ))


def test_duplicate_ids_are_malformed():
    entry = {"id": "gender", "category": "user_info", "label": "personal_info"}
    with pytest.raises(MalformedTaxonomyError):
        parse_taxonomy(_document(entry, entry))


@pytest.mark.parametrize("raw", [b"not json", b'{"id": "x"}', b"[1, 2]"])
def test_structurally_broken_documents(raw):
    with pytest.raises(MalformedTaxonomyError):
        parse_taxonomy(raw)


def test_sort_key_orders_by_specificity_then_category(taxonomy):
    ids = ["medical_condition", "body_weight", "precise_location", "advertising_id", "step_count"]
    ordered = sorted(ids, key=taxonomy.sort_key)
    assert ordered == ["advertising_id", "precise_location", "body_weight", "step_count", "medical_condition"]


def test_shipped_entries_follow_the_category_specificity_map(taxonomy):
    expected = {
        DataCategory.DEVICE_IDS: Specificity.STANDARD,
        DataCategory.LOCATION: Specificity.STANDARD,
        DataCategory.USER_INFO: Specificity.STANDARD,
        DataCategory.BODY_MEASUREMENTS: Specificity.NONSTANDARD,
        DataCategory.FITNESS_INFO: Specificity.NONSTANDARD,
        DataCategory.FEMALE_HEALTH_INFO: Specificity.MEDICAL,
        DataCategory.MEDICAL_INFO: Specificity.MEDICAL,
    }
    for entry in taxonomy.entries:
        assert entry.specificity == expected[entry.category], entry.data_type_id
        assert lookup(taxonomy, entry.data_type_id).specificity == expected[entry.category]

    standard = [entry for entry in taxonomy.entries if entry.specificity == Specificity.STANDARD]
    assert len(standard) >= 14
    assert len(taxonomy.entries) - len(standard) >= 21
