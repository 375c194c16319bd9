import csv
import io
import logging
from pathlib import Path
from typing import Iterable

import orjson
from pydantic import ValidationError

from mhaudit.domains.apps.schemas import AppRecord
from mhaudit.domains.common.enums import (
    STUDY_LABELS,
    DataCategory,
    FeatureCategory,
    LabelCategory,
    Verdict,
)
from mhaudit.domains.common.exceptions import ManifestError, MissingPolicyRuleError
from mhaudit.domains.common.jsonio import read_packaged
from mhaudit.domains.detect.schemas import DetectionSet
from mhaudit.domains.taxonomy.schemas import Taxonomy
from mhaudit.domains.taxonomy.service import lookup
from .schemas import DeclarationVerdict, ExpectationPolicy, ScopeFinding, ScopeRule

logger = logging.getLogger(__name__)

DEFAULT_POLICY_FILE = "policy.json"

VERDICT_COLUMNS = [
    "app_id",
    "label",
    "labels_published",
    "observed_collected",
    "observed_shared",
    "declared_collected",
    "declared_shared",
    "verdicts",
]


# --- Policy ---

def parse_policy(raw: bytes) -> ExpectationPolicy:
    try:
        document = orjson.loads(raw)
        return ExpectationPolicy(rules=document)
    except orjson.JSONDecodeError as e:
        raise ManifestError(f"policy is not valid JSON: {e}")
    except ValidationError as e:
        raise ManifestError(f"policy: {e.errors()[0]['msg']}")


def load_policy(file: Path) -> ExpectationPolicy:
    return parse_policy(Path(file).read_bytes())


def load_default_policy() -> ExpectationPolicy:
    return parse_policy(read_packaged(DEFAULT_POLICY_FILE))


def with_rule(policy: ExpectationPolicy, category: FeatureCategory, rule: ScopeRule) -> ExpectationPolicy:
    return ExpectationPolicy(rules={**policy.rules, category: rule})


# --- Expectation ---

def transmitted_categories(rollup: DetectionSet, app_id: str, taxonomy: Taxonomy) -> set[DataCategory]:
    """Data categories with at least one transmission, over all crawl kinds."""
    return {lookup(taxonomy, data_type_id).category for data_type_id in rollup.flags(app_id)}


def evaluate_scope(
    policy: ExpectationPolicy,
    rollup: DetectionSet,
    app: AppRecord,
    taxonomy: Taxonomy,
) -> list[ScopeFinding]:
    """One finding per data category for an app."""
    rule = policy.rules.get(app.feature_category)
    if rule is None:
        raise MissingPolicyRuleError(f"no rule for {app.feature_category.value}")
    transmitted = transmitted_categories(rollup, app.app_id, taxonomy)
    return [
        ScopeFinding(
            app_id=app.app_id,
            feature_category=app.feature_category,
            data_category=category,
            transmitted=category in transmitted,
            in_scope=rule.allows(category),
        )
        for category in DataCategory
    ]


# --- Declaration ---

def verdicts_for(
    observed_collected: bool,
    observed_shared: bool,
    declared_collected: bool,
    declared_shared: bool,
) -> frozenset[Verdict]:
    verdicts = set()
    if observed_collected:
        verdicts.add(Verdict.CORRECT_COLLECTION if declared_collected else Verdict.UNDECLARED_COLLECTION)
    if observed_shared:
        verdicts.add(Verdict.CORRECT_SHARING if declared_shared else Verdict.UNDECLARED_SHARING)
    if (declared_collected or declared_shared) and not observed_collected:
        verdicts.add(Verdict.UNOBSERVED_DECLARATION)
    return frozenset(verdicts)


def evaluate_labels(app: AppRecord, rollup: DetectionSet, taxonomy: Taxonomy) -> list[DeclarationVerdict]:
    """Observed practice vs declared label for each study label category."""
    observed: dict[LabelCategory, tuple[bool, bool]] = {}
    for data_type_id, flags in rollup.flags(app.app_id).items():
        label = lookup(taxonomy, data_type_id).label
        collected, shared = observed.get(label, (False, False))
        observed[label] = (collected or flags.collected, shared or flags.shared)

    for declaration in app.labels.declarations:
        if declaration.shared and not declaration.collected:
            logger.warning(
                "%s declares %s as shared but not collected",
                app.app_id,
                declaration.label.value,
            )

    results = []
    for label in STUDY_LABELS:
        observed_collected, observed_shared = observed.get(label, (False, False))
        declared_collected, declared_shared = app.labels.declared(label)
        results.append(DeclarationVerdict(
            app_id=app.app_id,
            label=label,
            labels_published=app.labels.published,
            observed_collected=observed_collected,
            observed_shared=observed_shared,
            declared_collected=declared_collected,
            declared_shared=declared_shared,
            verdicts=verdicts_for(observed_collected, observed_shared, declared_collected, declared_shared),
        ))
    return results


def verdicts_csv(verdicts: Iterable[DeclarationVerdict]) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(VERDICT_COLUMNS)
    for verdict in sorted(verdicts, key=lambda v: (v.app_id, STUDY_LABELS.index(v.label))):
        writer.writerow([
            verdict.app_id,
            verdict.label.value,
            str(verdict.labels_published).lower(),
            str(verdict.observed_collected).lower(),
            str(verdict.observed_shared).lower(),
            str(verdict.declared_collected).lower(),
            str(verdict.declared_shared).lower(),
            ";".join(sorted(v.value for v in verdict.verdicts)),
        ])
    return buffer.getvalue().encode("utf-8")
