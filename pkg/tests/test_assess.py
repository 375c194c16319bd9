from __future__ import annotations

import pytest

from mhaudit.domains.apps.schemas import AppRecord, LabelDeclaration, PrivacyLabelSet
from mhaudit.domains.assess.schemas import ScopeRule
from mhaudit.domains.assess.service import (
    evaluate_labels,
    evaluate_scope,
    load_default_policy,
    parse_policy,
    verdicts_csv,
    verdicts_for,
    with_rule,
)
from mhaudit.domains.common.enums import (
    CrawlKind,
    DataCategory,
    FeatureCategory,
    HitLocation,
    HostLabel,
    LabelCategory,
    Specificity,
    VariantKind,
    Verdict,
)
from mhaudit.domains.common.exceptions import ManifestError
from mhaudit.domains.detect.schemas import DetectionHit, DetectionSet
from mhaudit.domains.detect.service import rollup_hits

V = Verdict


def _app(feature: FeatureCategory, *declarations: LabelDeclaration, published: bool = True) -> AppRecord:
    return AppRecord(
        app_id="org.example.app",
        feature_category=feature,
        labels=PrivacyLabelSet(published=published, declarations=declarations),
        artifact_ref="classes.txt",
    )


def _detections(*sent: tuple[str, HostLabel]) -> DetectionSet:
    hits = [
        DetectionHit(
            app_id="org.example.app",
            flow_id=f"org.example.app/manual.jsonl#{n}",
            data_type_id=data_type_id,
            variant_kind=VariantKind.PLAIN,
            location=HitLocation.BODY,
            destination_host="h.example",
            host_label=label,
            crawl_kind=CrawlKind.MANUAL,
        )
        for n, (data_type_id, label) in enumerate(sent)
    ]
    return DetectionSet(hits=tuple(hits), rollup=rollup_hits(hits), app_ids=("org.example.app",))


def _finding(findings, category: DataCategory):
    return next(f for f in findings if f.data_category == category)


# --- Scope ---

def test_education_app_sending_body_measurements_is_out_of_scope(taxonomy):
    findings = evaluate_scope(
        load_default_policy(),
        _detections(("body_weight", HostLabel.NON_TRACKER)),
        _app(FeatureCategory.HEALTH_EDUCATION),
        taxonomy,
    )
    assert len(findings) == len(DataCategory)
    finding = _finding(findings, DataCategory.BODY_MEASUREMENTS)
    assert finding.transmitted and not finding.in_scope
    assert not _finding(findings, DataCategory.MEDICAL_INFO).transmitted


@pytest.mark.parametrize("feature, in_scope", [
    (FeatureCategory.SCREEN_OVERLAY, False),
    (FeatureCategory.TELEMEDICINE, True),
])
def test_location_scope_is_per_feature(taxonomy, feature, in_scope):
    findings = evaluate_scope(
        load_default_policy(),
        _detections(("precise_location", HostLabel.TRACKER)),
        _app(feature),
        taxonomy,
    )
    location = _finding(findings, DataCategory.LOCATION)
    assert location.transmitted
    assert location.in_scope == in_scope


def test_raising_specificity_never_narrows_scope():
    policy = load_default_policy()
    for feature, rule in policy.rules.items():
        for specificity in Specificity:
            if specificity.rank < rule.max_specificity.rank:
                continue
            wider = with_rule(policy, feature, rule.model_copy(update={"max_specificity": specificity})).rules[feature]
            for category in DataCategory:
                assert not rule.allows(category) or wider.allows(category)


def test_policy_must_cover_every_feature():
    with pytest.raises(ManifestError):
        parse_policy(b'{"pharmacy": {"max_specificity": "medical"}}')
    assert ScopeRule(max_specificity=Specificity.STANDARD).allows(DataCategory.USER_INFO)


# --- Declarations ---

# (observed collected, observed shared, declared collected, declared shared) -> verdicts
TRUTH_TABLE = [
    ((False, False, False, False), set()),
    ((False, False, True, False), {V.UNOBSERVED_DECLARATION}),
    ((False, False, False, True), {V.UNOBSERVED_DECLARATION}),
    ((False, False, True, True), {V.UNOBSERVED_DECLARATION}),
    ((True, False, False, False), {V.UNDECLARED_COLLECTION}),
    ((True, False, True, False), {V.CORRECT_COLLECTION}),
    ((True, False, False, True), {V.UNDECLARED_COLLECTION}),
    ((True, False, True, True), {V.CORRECT_COLLECTION}),
    ((True, True, False, False), {V.UNDECLARED_COLLECTION, V.UNDECLARED_SHARING}),
    ((True, True, True, False), {V.CORRECT_COLLECTION, V.UNDECLARED_SHARING}),
    ((True, True, False, True), {V.UNDECLARED_COLLECTION, V.CORRECT_SHARING}),
    ((True, True, True, True), {V.CORRECT_COLLECTION, V.CORRECT_SHARING}),
]


@pytest.mark.parametrize("flags, expected", TRUTH_TABLE)
def test_verdict_truth_table(flags, expected):
    assert verdicts_for(*flags) == expected


def test_undeclared_sharing_of_fitness_data(taxonomy):
    verdicts = evaluate_labels(
        _app(FeatureCategory.WORKOUT_TRACKER),
        _detections(("step_count", HostLabel.TRACKER)),
        taxonomy,
    )
    fitness = next(v for v in verdicts if v.label == LabelCategory.FITNESS_INFO)
    assert fitness.verdicts == {V.UNDECLARED_COLLECTION, V.UNDECLARED_SHARING}
    assert fitness.undeclared
    assert [v.label for v in verdicts] == [
        LabelCategory.DEVICE_OR_OTHER_IDS,
        LabelCategory.LOCATION,
        LabelCategory.PERSONAL_INFO,
        LabelCategory.FITNESS_INFO,
        LabelCategory.HEALTH_INFO,
    ]


def test_matching_declaration_and_unobserved_declaration(taxonomy):
    app = _app(
        FeatureCategory.HEALTH_MONITOR,
        LabelDeclaration(label=LabelCategory.HEALTH_INFO, collected=True),
        LabelDeclaration(label=LabelCategory.LOCATION, shared=True),
    )
    verdicts = {v.label: v for v in evaluate_labels(app, _detections(("medical_condition", HostLabel.NON_TRACKER)), taxonomy)}

    assert verdicts[LabelCategory.HEALTH_INFO].verdicts == {V.CORRECT_COLLECTION}
    assert verdicts[LabelCategory.LOCATION].verdicts == {V.UNOBSERVED_DECLARATION}
    assert not verdicts[LabelCategory.LOCATION].undeclared


def test_unpublished_labels_make_every_observation_undeclared(taxonomy):
    app = _app(FeatureCategory.DIET_TRACKER, published=False)
    verdicts = evaluate_labels(app, _detections(("email_address", HostLabel.NON_TRACKER)), taxonomy)
    personal = next(v for v in verdicts if v.label == LabelCategory.PERSONAL_INFO)
    assert personal.verdicts == {V.UNDECLARED_COLLECTION}
    assert not personal.labels_published


def test_verdicts_csv_is_sorted_and_stable(taxonomy):
    verdicts = evaluate_labels(
        _app(FeatureCategory.WORKOUT_TRACKER),
        _detections(("step_count", HostLabel.TRACKER)),
        taxonomy,
    )
    lines = verdicts_csv(reversed(verdicts)).decode().splitlines()
    assert lines[0].startswith("app_id,label,labels_published")
    assert lines[4] == "org.example.app,fitness_info,true,true,true,false,false,undeclared_collection;undeclared_sharing"
    assert verdicts_csv(verdicts) == verdicts_csv(reversed(verdicts))
