import logging

from mhaudit.domains.common.enums import VariantKind
from mhaudit.domains.common.exceptions import CorpusMismatchError
from mhaudit.domains.detect.schemas import DetectionSet
from .schemas import DetectorEvaluation, GroundTruth, VariantScore

logger = logging.getLogger(__name__)


def evaluate_detector(detections: DetectionSet, truth: GroundTruth) -> DetectorEvaluation:
    """Score detector hits against planted hits, matched on (flow, type, variant, location)."""
    truth_apps = set(truth.app_ids)
    stray = sorted({hit.app_id for hit in detections.hits} - truth_apps)
    if stray:
        raise CorpusMismatchError(f"hits for apps outside the ground truth: {', '.join(stray[:5])}")
    if detections.app_ids and truth_apps and not truth_apps & set(detections.app_ids):
        raise CorpusMismatchError("no scanned app appears in the ground truth")

    planted = {hit.key: hit for hit in truth.hits}
    reported = {hit.key: hit for hit in detections.hits}
    recovered = planted.keys() & reported.keys()

    per_variant = tuple(
        VariantScore(
            variant_kind=kind,
            planted=sum(1 for key in planted if key[2] == kind),
            recovered=sum(1 for key in recovered if key[2] == kind),
        )
        for kind in VariantKind
    )
    evaluation = DetectorEvaluation(
        planted=len(planted),
        reported=len(reported),
        true_hits=len(recovered),
        recall=len(recovered) / len(planted) if planted else 1.0,
        precision=len(recovered) / len(reported) if reported else 1.0,
        per_variant=per_variant,
        missed=tuple(sorted((planted[k] for k in planted.keys() - recovered), key=lambda hit: hit.sort_key)),
        spurious=tuple(sorted((reported[k] for k in reported.keys() - recovered), key=lambda hit: hit.sort_key)),
    )
    if evaluation.missed or evaluation.spurious:
        logger.warning(
            "Detector missed %d planted hits and reported %d spurious ones",
            len(evaluation.missed), len(evaluation.spurious),
        )
    return evaluation
