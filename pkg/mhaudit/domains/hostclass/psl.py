"""Public suffix list loading on top of publicsuffix2."""

import logging
from functools import lru_cache
from pathlib import Path

from publicsuffix2 import PublicSuffixList

from mhaudit.domains.common.jsonio import read_packaged

logger = logging.getLogger(__name__)

DEFAULT_PSL_FILE = "psl_snapshot.txt"


def parse_psl(text: str) -> PublicSuffixList:
    return PublicSuffixList(psl_file=text.splitlines())


def load_psl(file: Path) -> PublicSuffixList:
    psl = parse_psl(Path(file).read_text(encoding="utf-8"))
    logger.debug("Loaded public suffix list from %s", file)
    return psl


@lru_cache
def load_default_psl() -> PublicSuffixList:
    return parse_psl(read_packaged(DEFAULT_PSL_FILE).decode("utf-8"))


def public_suffix(psl: PublicSuffixList, hostname: str) -> str:
    """Longest matching suffix; an unlisted TLD is its own suffix."""
    return psl.get_tld(hostname) or hostname.rsplit(".", 1)[-1]
