import logging
from typing import Callable, Iterable

from mhaudit.domains.common.fields import LedgerEntry
from .stages import StageResult, assess, classify_hosts, detect, report, scan_static
from .state import RESOURCES, AuditContext

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_FATAL = 2

STAGES: tuple[tuple[str, Callable[[AuditContext], StageResult]], ...] = (
    ("scan-static", scan_static),
    ("classify-hosts", classify_hosts),
    ("detect", detect),
    ("assess", assess),
    ("report", report),
)


def exit_status(errors: Iterable[LedgerEntry]) -> int:
    return EXIT_PARTIAL if list(errors) else EXIT_OK


def run_stage(ctx: AuditContext, name: str) -> int:
    stage = dict(STAGES)[name]
    result = stage(ctx)
    for path in result.written:
        logger.debug("%s wrote %s", name, path)
    return exit_status(result.errors)


def run_pipeline(ctx: AuditContext) -> int:
    """All stages in order; 0 when every app went through cleanly, 1 otherwise."""
    ctx.preload(*RESOURCES)
    result = None
    for name, stage in STAGES:
        logger.info("Stage %s", name)
        result = stage(ctx)
    # the report stage carries the merged ledger of every stage
    if result.errors:
        apps = sorted({entry.app_id for entry in result.errors})
        logger.warning("%d apps have errors: %s", len(apps), ", ".join(apps))
    logger.info("Report written to %s", ctx.output_dir)
    return exit_status(result.errors)
