import csv
import io
import logging
from pathlib import Path
from typing import Iterable

from jinja2 import Environment, PackageLoader, StrictUndefined

from mhaudit.domains.common.enums import DataCategory, Specificity
from mhaudit.domains.common.exceptions import IoFailureError
from mhaudit.domains.common.jsonio import dumps
from .schemas import AppDetail, CorpusStats

logger = logging.getLogger(__name__)

BUNDLE_FILES = (
    "summary.json",
    "embedded_trackers.csv",
    "contacted_hosts.csv",
    "transmissions_by_type.csv",
    "transmissions_by_specificity.csv",
    "scope_matrix.csv",
    "label_accuracy.csv",
    "report.md",
)

SCOPE_MATRIX_HEADER = (
    ["feature_category", "apps"]
    + [category.display_name for category in DataCategory]
    + ["out_of_scope"]
)

_environment = Environment(
    loader=PackageLoader("mhaudit", "domains/stats/templates"),
    undefined=StrictUndefined,
    keep_trailing_newline=True,
    trim_blocks=True,
    lstrip_blocks=True,
)


def _csv(header: list[str], rows: Iterable[list]) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue().encode("utf-8")


def embedded_csv(stats: CorpusStats) -> bytes:
    return _csv(
        ["tracker_name", "app_count", "pct_apps"],
        ([entry.name, entry.app_count, entry.pct_apps] for entry in stats.embedded.library_ranking),
    )


def contacted_csv(stats: CorpusStats) -> bytes:
    return _csv(
        ["app_id", "tracker_hosts", "nontracker_hosts", "tracker_domains"],
        ([row.app_id, row.tracker_hosts, row.nontracker_hosts, row.tracker_domains] for row in stats.contacted.per_app),
    )


def transmissions_by_type_csv(stats: CorpusStats) -> bytes:
    rows = stats.transmissions.by_type if stats.app_count else ()
    return _csv(
        ["data_type_id", "category", "specificity", "non_tracker_apps", "tracker_apps", "transmitting_apps"],
        (
            [row.data_type_id, row.category.value, row.specificity.value, row.non_tracker_apps, row.tracker_apps, row.transmitting_apps]
            for row in rows
        ),
    )


def transmissions_by_specificity_csv(stats: CorpusStats) -> bytes:
    rows = stats.transmissions.by_specificity if stats.app_count else ()
    return _csv(
        ["specificity", "crawl_kind", "apps", "pct_apps"],
        ([row.specificity.value, row.crawl_kind.value, row.apps, row.pct_apps] for row in rows),
    )


def scope_matrix_csv(stats: CorpusStats) -> bytes:
    rows = stats.scope_matrix.rows if stats.app_count else ()
    return _csv(
        SCOPE_MATRIX_HEADER,
        (
            [row.feature_category.value, row.apps]
            + [cell.app_count for cell in row.cells]
            + [";".join(category.display_name for category in row.out_of_scope)]
            for row in rows
        ),
    )


def label_accuracy_csv(stats: CorpusStats) -> bytes:
    rows = stats.label_accuracy.rows if stats.app_count else ()
    return _csv(
        [
            "label",
            "declared_ok_collect",
            "undeclared_collect",
            "declared_ok_share",
            "undeclared_share",
            "unobserved_declarations",
            "share_declared_ratio",
        ],
        (
            [
                row.label.value,
                row.declared_ok_collect,
                row.undeclared_collect,
                row.declared_ok_share,
                row.undeclared_share,
                row.unobserved_declarations,
                round(row.share_declared_ratio, 3),
            ]
            for row in rows
        ),
    )


def render_markdown(stats: CorpusStats, details: list[AppDetail]) -> bytes:
    template = _environment.get_template("report.md.j2")
    text = template.render(
        stats=stats,
        details=sorted(details, key=lambda detail: detail.app_id),
        categories=list(DataCategory),
        specificities=list(Specificity),
    )
    return text.encode("utf-8")


def render_bundle(stats: CorpusStats, details: list[AppDetail]) -> dict[str, bytes]:
    """File name -> bytes for every file of the report bundle."""
    return {
        "summary.json": dumps(stats),
        "embedded_trackers.csv": embedded_csv(stats),
        "contacted_hosts.csv": contacted_csv(stats),
        "transmissions_by_type.csv": transmissions_by_type_csv(stats),
        "transmissions_by_specificity.csv": transmissions_by_specificity_csv(stats),
        "scope_matrix.csv": scope_matrix_csv(stats),
        "label_accuracy.csv": label_accuracy_csv(stats),
        "report.md": render_markdown(stats, details),
    }


def render_report(stats: CorpusStats, details: list[AppDetail], output_dir: Path) -> list[Path]:
    """Write the report bundle; identical inputs give identical bytes."""
    output_dir = Path(output_dir)
    written = []
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
        for name, content in render_bundle(stats, details).items():
            path = output_dir / name
            path.write_bytes(content)
            written.append(path)
    except OSError as e:
        raise IoFailureError(f"cannot write report to {output_dir}: {e.strerror or e}")
    logger.info("Wrote %d report files to %s", len(written), output_dir)
    return written
