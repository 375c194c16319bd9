import logging
from pathlib import Path

import orjson
from pydantic import ValidationError

from mhaudit.domains.common.exceptions import ManifestError
from .schemas import AuditManifest

logger = logging.getLogger(__name__)

REQUIRED_RESOURCES = ("taxonomy", "hosts", "signatures")
OPTIONAL_RESOURCES = ("persona", "policy", "psl")


def _resolve(base_dir: Path, value: str | None) -> str | None:
    if value is None:
        return None
    path = Path(value)
    return str(path if path.is_absolute() else base_dir / path)


def parse_manifest(document: dict, base_dir: Path) -> AuditManifest:
    """Resolve relative paths against base_dir and validate the manifest."""
    if not isinstance(document, dict):
        raise ManifestError("manifest must be a JSON object")

    for key in REQUIRED_RESOURCES:
        if not document.get(key):
            raise ManifestError(f"manifest is missing the {key!r} path")

    resolved = {**document, "base_dir": str(base_dir)}
    for key in REQUIRED_RESOURCES + OPTIONAL_RESOURCES:
        resolved[key] = _resolve(base_dir, document.get(key))
        if resolved[key] is not None and not Path(resolved[key]).is_file():
            raise ManifestError(f"{key} file not found: {resolved[key]}")

    if not isinstance(document.get("apps", []), list):
        raise ManifestError("apps must be a list")
    apps = []
    for position, app in enumerate(document.get("apps", [])):
        if not isinstance(app, dict):
            raise ManifestError(f"apps.{position}: app entry must be an object")
        app = dict(app)
        app["artifact_ref"] = _resolve(base_dir, app.pop("artifact", app.get("artifact_ref")))
        captures = app.pop("captures", app.get("capture_refs")) or []
        if not isinstance(captures, list):
            raise ManifestError(f"apps.{position}.captures must be a list")
        refs = []
        for index, capture in enumerate(captures):
            if not isinstance(capture, dict) or not capture.get("path"):
                raise ManifestError(f"apps.{position}.captures.{index}: capture needs a path")
            refs.append({**capture, "path": _resolve(base_dir, capture["path"])})
        app["capture_refs"] = refs
        apps.append(app)
    resolved["apps"] = apps

    options = dict(document.get("options") or {})
    if options.get("output_dir"):
        options["output_dir"] = _resolve(base_dir, options["output_dir"])
    resolved["options"] = options

    try:
        return AuditManifest.model_validate(resolved)
    except ValidationError as e:
        error = e.errors()[0]
        location = ".".join(str(part) for part in error["loc"])
        raise ManifestError(f"{location}: {error['msg']}")


def load_manifest(file: Path) -> AuditManifest:
    """Load an audit manifest; any problem here is fatal for the run."""
    file = Path(file)
    try:
        document = orjson.loads(file.read_bytes())
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {file}")
    except orjson.JSONDecodeError as e:
        raise ManifestError(f"manifest is not valid JSON: {e}")
    manifest = parse_manifest(document, file.resolve().parent)
    logger.info("Loaded manifest %s with %d apps", file, len(manifest.apps))
    return manifest
