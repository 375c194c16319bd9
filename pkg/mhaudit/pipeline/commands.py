"""Audit subcommands: the full run and each stage on its own."""

import logging
from pathlib import Path
from typing import Optional

import typer

from mhaudit.domains.apps.service import load_manifest
from mhaudit.domains.common.exceptions import AuditError, ManifestError
from mhaudit.logs import setup_logging
from mhaudit.settings import get_settings
from .runner import EXIT_FATAL, run_pipeline, run_stage
from .state import AuditContext

logger = logging.getLogger(__name__)

ManifestOption = typer.Option(..., "--manifest", help="Audit manifest (JSON).")
OutputOption = typer.Option(None, "--output-dir", help="Output directory; defaults to MHAUDIT_OUTPUT_DIR.")
JobsOption = typer.Option(None, "--jobs", min=1, help="Apps processed in parallel.")
QuietOption = typer.Option(False, "--quiet", help="Only log warnings and errors.")


def _context(manifest: Path, output_dir: Optional[Path], jobs: Optional[int], quiet: bool) -> AuditContext:
    settings = get_settings()
    setup_logging(settings.log_level, quiet)
    return AuditContext(load_manifest(manifest), settings, output_dir=output_dir, jobs=jobs)


def _execute(action, manifest: Path, output_dir: Optional[Path], jobs: Optional[int], quiet: bool) -> None:
    try:
        code = action(_context(manifest, output_dir, jobs, quiet))
    except ManifestError as e:
        logger.error("%s", e.detail)
        raise typer.Exit(EXIT_FATAL)
    except AuditError as e:
        logger.error("%s: %s", type(e).__name__, e.detail)
        raise typer.Exit(EXIT_FATAL)
    raise typer.Exit(code)


def register(app: typer.Typer) -> None:
    @app.command("run")
    def run(
        manifest: Path = ManifestOption,
        output_dir: Optional[Path] = OutputOption,
        jobs: Optional[int] = JobsOption,
        quiet: bool = QuietOption,
    ):
        """Run every stage and write the report bundle."""
        _execute(run_pipeline, manifest, output_dir, jobs, quiet)

    for name, summary in (
        ("scan-static", "Find embedded tracker libraries in app artifacts."),
        ("classify-hosts", "Label contacted hosts as trackers or first parties."),
        ("detect", "Find persona values in captured requests."),
        ("assess", "Compare transmissions with expected scope and privacy labels."),
        ("report", "Aggregate stage artifacts into the report bundle."),
    ):
        _register_stage(app, name, summary)


def _register_stage(app: typer.Typer, name: str, summary: str) -> None:
    def command(
        manifest: Path = ManifestOption,
        output_dir: Optional[Path] = OutputOption,
        jobs: Optional[int] = JobsOption,
        quiet: bool = QuietOption,
    ):
        _execute(lambda ctx: run_stage(ctx, name), manifest, output_dir, jobs, quiet)

    command.__doc__ = summary
    app.command(name)(command)
