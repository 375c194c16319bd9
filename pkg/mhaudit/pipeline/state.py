"""Run context shared by the pipeline stages."""

import logging
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, TypeVar

from mhaudit.domains.apps.schemas import AuditManifest
from mhaudit.domains.assess.schemas import ExpectationPolicy
from mhaudit.domains.assess.service import load_default_policy, load_policy
from mhaudit.domains.common.enums import HostMatchMode, VariantKind
from mhaudit.domains.common.exceptions import AuditError, ManifestError
from mhaudit.domains.detect.schemas import MatcherSet, Persona
from mhaudit.domains.detect.service import compile_persona, load_default_persona, load_persona
from mhaudit.domains.hostclass.psl import PublicSuffixList, load_default_psl, load_psl
from mhaudit.domains.hostclass.schemas import HostsList
from mhaudit.domains.hostclass.service import load_hosts_list
from mhaudit.domains.staticscan.schemas import TrackerSignature
from mhaudit.domains.staticscan.service import load_signature_db
from mhaudit.domains.taxonomy.schemas import Taxonomy
from mhaudit.domains.taxonomy.service import load_taxonomy
from mhaudit.settings import Settings

logger = logging.getLogger(__name__)

STAGES_DIR = "stages"
RESOURCES = ("taxonomy", "hosts", "signatures", "persona", "policy", "psl", "matchers")

T = TypeVar("T")


def _fatal(what: str, loader: Callable[[], T]) -> T:
    """Resources are configuration: any failure to load one ends the run."""
    try:
        return loader()
    except ManifestError:
        raise
    except (AuditError, OSError, UnicodeDecodeError) as e:
        raise ManifestError(f"cannot load {what}: {getattr(e, 'detail', None) or e}")


class AuditContext:
    """Manifest, resolved options and lazily loaded resources of one run.

    Options resolve as CLI flag > manifest option > settings (environment/.env) > default.
    """

    def __init__(
        self,
        manifest: AuditManifest,
        settings: Settings,
        output_dir: Optional[Path] = None,
        jobs: Optional[int] = None,
    ):
        options = manifest.options
        self.manifest = manifest
        self.output_dir = Path(output_dir or options.output_dir or settings.output_dir)
        self.jobs = max(1, jobs or settings.jobs)
        self.host_match_mode: HostMatchMode = options.host_match_mode or settings.host_match_mode
        self.numeric_window: int = options.numeric_window or settings.numeric_window
        self.variant_kinds: Optional[tuple[VariantKind, ...]] = options.variant_kinds

    @property
    def apps(self):
        return self.manifest.apps

    @property
    def stages_dir(self) -> Path:
        return self.output_dir / STAGES_DIR

    def stage_path(self, name: str) -> Path:
        return self.stages_dir / name

    # --- Resources ---

    @cached_property
    def taxonomy(self) -> Taxonomy:
        return _fatal("taxonomy", lambda: load_taxonomy(self.manifest.taxonomy))

    @cached_property
    def hosts(self) -> HostsList:
        return _fatal("hosts list", lambda: load_hosts_list(self.manifest.hosts))

    @cached_property
    def signatures(self) -> list[TrackerSignature]:
        return _fatal("signature database", lambda: load_signature_db(self.manifest.signatures))

    @cached_property
    def persona(self) -> Persona:
        if self.manifest.persona is None:
            return load_default_persona()
        return _fatal("persona", lambda: load_persona(self.manifest.persona))

    @cached_property
    def policy(self) -> ExpectationPolicy:
        if self.manifest.policy is None:
            return load_default_policy()
        return _fatal("expectation policy", lambda: load_policy(self.manifest.policy))

    @cached_property
    def psl(self) -> PublicSuffixList:
        if self.manifest.psl is None:
            return load_default_psl()
        return _fatal("public suffix list", lambda: load_psl(self.manifest.psl))

    @cached_property
    def matchers(self) -> MatcherSet:
        return _fatal("persona matchers", lambda: compile_persona(
            self.persona,
            self.taxonomy,
            variant_kinds=self.variant_kinds,
            numeric_window=self.numeric_window,
        ))

    def preload(self, *names: str) -> None:
        """Load resources up front so a bad one fails the run before any app is processed."""
        for name in names:
            getattr(self, name)
