"""Built-in fixture plans.

Each preset returns a FixtureConfig; `published-figures` only carries target
figures and is solved into per-app plans by `solve_targets`.
"""

from typing import Callable

from mhaudit.domains.apps.schemas import LabelDeclaration, PrivacyLabelSet
from mhaudit.domains.common.enums import (
    CrawlKind,
    DataCategory,
    FeatureCategory,
    HitLocation,
    HostLabel,
    LabelCategory,
    VariantKind,
)
from mhaudit.domains.common.exceptions import InvalidPlanError
from mhaudit.domains.detect.encodings import is_url_safe, percent_encode
from mhaudit.domains.detect.schemas import Persona
from mhaudit.domains.detect.service import load_default_persona
from mhaudit.domains.staticscan.schemas import TrackerSignature
from .schemas import AppPlan, ContactPlan, FixtureConfig, LeakPlan, TargetStats

# apps per feature category, then transmitting apps per data category in
# DataCategory order
SCOPE_MATRIX_CELLS: dict[FeatureCategory, tuple[int, tuple[int, ...]]] = {
    FeatureCategory.SCREEN_OVERLAY: (3, (2, 1, 2, 0, 0, 0, 0)),
    FeatureCategory.HEALTH_EDUCATION: (14, (9, 1, 7, 2, 0, 0, 0)),
    FeatureCategory.STEP_COUNTER: (4, (4, 1, 4, 1, 1, 0, 1)),
    FeatureCategory.WORKOUT_TRACKER: (26, (25, 1, 25, 7, 10, 0, 1)),
    FeatureCategory.CARDIO_TRACKER: (14, (12, 3, 12, 1, 1, 0, 0)),
    FeatureCategory.DIET_TRACKER: (12, (12, 5, 10, 6, 5, 0, 3)),
    FeatureCategory.WEARABLE: (3, (2, 0, 1, 1, 1, 0, 1)),
    FeatureCategory.MENTAL_WELLBEING: (6, (6, 0, 5, 1, 5, 0, 0)),
    FeatureCategory.PHARMACY: (5, (5, 2, 4, 1, 0, 0, 0)),
    FeatureCategory.PHYSICIAN_FINDER: (1, (1, 1, 1, 0, 0, 0, 0)),
    FeatureCategory.FEMALE_HEALTH: (26, (20, 5, 19, 4, 1, 9, 7)),
    FeatureCategory.DIAGNOSTIC: (1, (1, 1, 1, 0, 0, 0, 0)),
    FeatureCategory.HEALTH_MONITOR: (34, (23, 4, 23, 2, 3, 2, 9)),
    FeatureCategory.TELEMEDICINE: (3, (3, 2, 2, 1, 1, 0, 0)),
}

# one transmitted type stands for its whole data category
REPRESENTATIVE_LEAKS: dict[DataCategory, tuple[str, VariantKind]] = {
    DataCategory.DEVICE_IDS: ("advertising_id", VariantKind.PLAIN),
    DataCategory.LOCATION: ("precise_location", VariantKind.PLAIN),
    DataCategory.USER_INFO: ("email_address", VariantKind.PLAIN),
    DataCategory.BODY_MEASUREMENTS: ("body_weight", VariantKind.KEYED_NUMERIC),
    DataCategory.FITNESS_INFO: ("fitness_goal", VariantKind.PLAIN),
    DataCategory.FEMALE_HEALTH_INFO: ("contraception_method", VariantKind.PLAIN),
    DataCategory.MEDICAL_INFO: ("medical_condition", VariantKind.PLAIN),
}

PUBLISHED_FIGURES = TargetStats(
    app_count=152,
    pct_apps_with_tracker=94.7,
    mean_trackers_per_app=6.3,
    pct_apps_top_tracker=90.1,
    total_requests=2651,
    reviewable_requests=717,
    apps_more_trackers=94,
    apps_zero_trackers=4,
    pct_apps_standard=80.4,
    pct_apps_nonstandard=19.6,
    pct_apps_medical=9.3,
    pct_apps_without_labels=15.1,
    pct_apps_share_without_collect=18.4,
)

_CATEGORIES = list(FeatureCategory)


def _app_id(index: int) -> str:
    return f"org.fixture.app{index:03d}"


def _leak(category: DataCategory, **kwargs) -> LeakPlan:
    data_type_id, variant_kind = REPRESENTATIVE_LEAKS[category]
    return LeakPlan(data_type_id=data_type_id, variant_kind=variant_kind, **kwargs)


def _declare(*declarations: tuple[LabelCategory, bool, bool]) -> PrivacyLabelSet:
    return PrivacyLabelSet(
        published=True,
        declarations=tuple(
            LabelDeclaration(label=label, collected=collected, shared=shared)
            for label, collected, shared in declarations
        ),
    )


# --- Round trip ---

def _compatible_types(persona: Persona, kind: VariantKind, location: HitLocation) -> list[str]:
    """Persona types that can be planted as `kind` at `location`."""
    types = []
    for attribute in persona.attributes:
        value = attribute.values[0]
        if kind == VariantKind.KEYED_NUMERIC:
            ok = attribute.numeric
        elif attribute.numeric:
            ok = False
        elif kind == VariantKind.PLAIN and location in (HitLocation.PATH, HitLocation.QUERY):
            ok = is_url_safe(value)
        elif kind == VariantKind.PERCENT_ENCODED:
            ok = percent_encode(value) != value
        else:
            ok = True
        if ok:
            types.append(attribute.data_type_id)
    return types


def round_trip(seed: int = 0, plants_per_combination: int = 8, app_count: int = 16) -> FixtureConfig:
    """Every variant kind at every location, spread over `app_count` apps."""
    persona = load_default_persona()
    leaks: list[list[LeakPlan]] = [[] for _ in range(app_count)]
    plant = 0
    for kind in VariantKind:
        for location in HitLocation:
            types = _compatible_types(persona, kind, location)
            for k in range(plants_per_combination):
                leaks[plant % app_count].append(LeakPlan(
                    data_type_id=types[(plant + k) % len(types)],
                    variant_kind=kind,
                    location=location,
                    destination=HostLabel.TRACKER if k % 2 else HostLabel.NON_TRACKER,
                    crawl_kind=CrawlKind.AUTOMATED if k % 4 == 3 else CrawlKind.MANUAL,
                ))
                plant += 1

    apps = []
    for index in range(app_count):
        if index % 3 == 0:
            labels = PrivacyLabelSet()
        elif index % 3 == 1:
            labels = _declare((LabelCategory.DEVICE_OR_OTHER_IDS, True, True))
        else:
            labels = _declare((LabelCategory.PERSONAL_INFO, True, False), (LabelCategory.HEALTH_INFO, True, False))
        apps.append(AppPlan(
            app_id=_app_id(index),
            feature_category=_CATEGORIES[index % len(_CATEGORIES)],
            signature_ids=("firebase_analytics",) if index % 2 else ("firebase_analytics", "appsflyer"),
            leaks=tuple(leaks[index]),
            labels=labels,
        ))
    return FixtureConfig(seed=seed, apps=tuple(apps), decoy_flow_count=3)


# --- Decoys only ---

def decoy_only(seed: int = 0, app_count: int = 10, decoy_flow_count: int = 20) -> FixtureConfig:
    apps = tuple(
        AppPlan(
            app_id=_app_id(index),
            feature_category=_CATEGORIES[index % len(_CATEGORIES)],
            contacts=ContactPlan(tracker_hosts=2, nontracker_hosts=2, empty_requests=3),
        )
        for index in range(app_count)
    )
    return FixtureConfig(seed=seed, apps=apps, decoy_flow_count=decoy_flow_count)


# --- Manual vs automated crawl ---

# apps transmitting each category in the (manual, automated) crawl
COMPARISON_COUNTS: dict[DataCategory, tuple[int, int]] = {
    DataCategory.DEVICE_IDS: (20, 19),
    DataCategory.BODY_MEASUREMENTS: (12, 3),
    DataCategory.MEDICAL_INFO: (8, 1),
}


def comparison(seed: int = 0, app_count: int = 20) -> FixtureConfig:
    apps = []
    for index in range(app_count):
        leaks = []
        for category, (manual, automated) in COMPARISON_COUNTS.items():
            destination = HostLabel.TRACKER if category == DataCategory.DEVICE_IDS else HostLabel.NON_TRACKER
            if index < manual:
                leaks.append(_leak(category, destination=destination, crawl_kind=CrawlKind.MANUAL))
            if index < automated:
                leaks.append(_leak(category, destination=destination, crawl_kind=CrawlKind.AUTOMATED))
        apps.append(AppPlan(
            app_id=_app_id(index),
            feature_category=FeatureCategory.HEALTH_MONITOR,
            signature_ids=("firebase_analytics",),
            leaks=tuple(leaks),
        ))
    return FixtureConfig(seed=seed, apps=tuple(apps))


# --- Scope matrix replay ---

def scope_replay(seed: int = 0) -> FixtureConfig:
    """One app per counted app of the scope matrix, transmitting its cells."""
    apps = []
    for feature, (app_count, cells) in SCOPE_MATRIX_CELLS.items():
        for position in range(app_count):
            leaks = tuple(
                _leak(category)
                for category, count in zip(DataCategory, cells)
                if position < count
            )
            apps.append(AppPlan(
                app_id=_app_id(len(apps)),
                feature_category=feature,
                leaks=leaks,
                contacts=ContactPlan(tracker_hosts=0, nontracker_hosts=1),
            ))
    return FixtureConfig(seed=seed, apps=tuple(apps), decoy_flow_count=0)


# --- Published figures ---

def published_figures(seed: int = 0) -> FixtureConfig:
    return FixtureConfig(seed=seed, target_stats=PUBLISHED_FIGURES)


def _share(pct: float, whole: int) -> int:
    return round(pct * whole / 100.0)


def _spread(total: int, slots: int) -> list[int]:
    """`total` split over `slots` with the larger shares first."""
    base, extra = divmod(total, slots)
    return [base + 1 if slot < extra else base for slot in range(slots)]


def _feature_categories(app_count: int) -> list[FeatureCategory]:
    """Feature categories in scope-matrix proportions, cycling when the corpus is larger."""
    ordered = [feature for feature, (count, _) in SCOPE_MATRIX_CELLS.items() for _ in range(count)]
    return [ordered[index % len(ordered)] for index in range(app_count)]


def solve_targets(targets: TargetStats, signatures: list[TrackerSignature]) -> tuple[AppPlan, ...]:
    """Integer per-app plans whose corpus statistics round to the target figures."""
    n = targets.app_count
    if len(signatures) < 2:
        raise InvalidPlanError("target plans need at least two tracker signatures")
    top, others = signatures[0].signature_id, [s.signature_id for s in signatures[1:]]

    with_tracker = _share(targets.pct_apps_with_tracker, n)
    top_apps = _share(targets.pct_apps_top_tracker, n)
    embeddings = _spread(round(targets.mean_trackers_per_app * n), with_tracker) if with_tracker else []
    if embeddings and max(embeddings) > len(others) + 1:
        raise InvalidPlanError("not enough signatures for the requested trackers per app")

    reviewable = _spread(targets.reviewable_requests, n)
    empty = _spread(targets.total_requests - targets.reviewable_requests, n)
    standard = _share(targets.pct_apps_standard, n)
    nonstandard = _share(targets.pct_apps_nonstandard, n)
    medical = _share(targets.pct_apps_medical, n)
    unpublished = _share(targets.pct_apps_without_labels, n)
    share_only = _share(targets.pct_apps_share_without_collect, n)
    if unpublished + share_only > n:
        raise InvalidPlanError("label targets exceed the app count")

    features = _feature_categories(n)
    plans = []
    cursor = 0
    for index in range(n):
        ids: list[str] = []
        if index < with_tracker:
            if index < top_apps:
                ids.append(top)
            while len(ids) < embeddings[index]:
                ids.append(others[cursor % len(others)])
                cursor += 1

        if index < targets.apps_more_trackers:
            contacts = (3, 1)
        elif index >= n - targets.apps_zero_trackers:
            contacts = (0, 2)
        else:
            contacts = (1, 2)

        leaks = []
        if index < standard:
            destination = HostLabel.TRACKER if contacts[0] else HostLabel.NON_TRACKER
            leaks.append(_leak(DataCategory.DEVICE_IDS, destination=destination))
        if index < nonstandard:
            leaks.append(_leak(DataCategory.BODY_MEASUREMENTS))
        if index < medical:
            leaks.append(_leak(DataCategory.MEDICAL_INFO))
        if len(leaks) > reviewable[index]:
            raise InvalidPlanError(f"app {index} needs more reviewable requests than planned")

        if index >= n - unpublished:
            labels = PrivacyLabelSet()
        elif index < share_only:
            labels = _declare((LabelCategory.LOCATION, False, True))
        else:
            labels = _declare((LabelCategory.DEVICE_OR_OTHER_IDS, True, True))

        plans.append(AppPlan(
            app_id=_app_id(index),
            feature_category=features[index],
            signature_ids=tuple(ids),
            leaks=tuple(leaks),
            labels=labels,
            contacts=ContactPlan(tracker_hosts=contacts[0], nontracker_hosts=contacts[1], empty_requests=empty[index]),
            decoy_flows=reviewable[index] - len(leaks),
        ))
    return tuple(plans)


PRESETS: dict[str, Callable[[int], FixtureConfig]] = {
    "round-trip": round_trip,
    "decoy-only": decoy_only,
    "comparison": comparison,
    "published-figures": published_figures,
    "scope-replay": scope_replay,
}


def preset(name: str, seed: int = 0) -> FixtureConfig:
    builder = PRESETS.get(name)
    if builder is None:
        raise InvalidPlanError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return builder(seed)
