import logging
from pathlib import Path
from typing import Optional

import typer

from mhaudit.domains.common.exceptions import AuditError
from mhaudit.domains.common.fields import LedgerEntry
from mhaudit.domains.common.jsonio import read_json, read_jsonl, write_json
from mhaudit.domains.detect.schemas import DetectionHit, DetectionSet
from mhaudit.domains.detect.service import rollup_hits
from mhaudit.logs import setup_logging
from mhaudit.settings import get_settings
from .evaluate import evaluate_detector
from .plans import PRESETS, preset
from .service import generate_corpus, load_fixture_config, load_ground_truth

logger = logging.getLogger(__name__)

app = typer.Typer(help="Synthetic corpora with known ground truth.", no_args_is_help=True)


def _detections(hits_file: Path) -> DetectionSet:
    hits = [DetectionHit.model_validate(row) for row in read_jsonl(hits_file)]
    # detections.json sits next to hits.jsonl in a stages directory
    summary = hits_file.with_name("detections.json")
    document = read_json(summary) if summary.is_file() else {}
    return DetectionSet(
        hits=tuple(hits),
        rollup=rollup_hits(hits),
        app_ids=tuple(document.get("app_ids", [])),
        errors=tuple(LedgerEntry.model_validate(e) for e in document.get("errors", [])),
    )


@app.command("gen")
def gen(
    out: Path = typer.Option(..., "--out", help="Directory for the generated corpus."),
    preset_name: Optional[str] = typer.Option(None, "--preset", help=f"One of: {', '.join(PRESETS)}."),
    config: Optional[Path] = typer.Option(None, "--config", help="FixtureConfig JSON file."),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, help="Overrides the plan's seed."),
    quiet: bool = typer.Option(False, "--quiet"),
):
    """Write a seeded corpus, its manifest and ground_truth.json."""
    setup_logging(get_settings().log_level, quiet)
    if (preset_name is None) == (config is None):
        logger.error("pass exactly one of --preset or --config")
        raise typer.Exit(2)
    try:
        plan = preset(preset_name) if preset_name else load_fixture_config(config)
        if seed is not None:
            plan = plan.model_copy(update={"seed": seed})
        corpus = generate_corpus(plan, out)
    except AuditError as e:
        logger.error("%s: %s", type(e).__name__, e.detail)
        raise typer.Exit(2)
    logger.info("Manifest: %s", corpus.manifest_path)


@app.command("eval")
def evaluate(
    hits: Path = typer.Option(..., "--hits", help="hits.jsonl written by the detect stage."),
    truth: Path = typer.Option(..., "--truth", help="ground_truth.json of the corpus."),
    out: Path = typer.Option(..., "--out", help="Where to write the evaluation JSON."),
    quiet: bool = typer.Option(False, "--quiet"),
):
    """Score detector hits against the planted ground truth."""
    setup_logging(get_settings().log_level, quiet)
    try:
        result = evaluate_detector(_detections(hits), load_ground_truth(truth))
        write_json(out, result)
    except AuditError as e:
        logger.error("%s: %s", type(e).__name__, e.detail)
        raise typer.Exit(2)
    except OSError as e:
        logger.error("cannot evaluate: %s", e)
        raise typer.Exit(2)
    logger.info("recall %.3f, precision %.3f", result.recall, result.precision)
    raise typer.Exit(0 if result.recall == 1.0 and result.precision == 1.0 else 1)
