from pydantic import BaseModel, ConfigDict, field_validator

from mhaudit.domains.common.enums import HostLabel


class HostsList(BaseModel):
    """Tracker hostnames parsed from a unified hosts blocklist."""
    model_config = ConfigDict(frozen=True)

    entries: frozenset[str] = frozenset()
    source_digest: str = ""
    malformed_lines: int = 0

    @field_validator("entries")
    @classmethod
    def _normalized(cls, entries: frozenset[str]) -> frozenset[str]:
        for host in entries:
            if host != host.lower() or "://" in host or any(c.isspace() for c in host):
                raise ValueError(f"hostname not normalized: {host!r}")
        return entries

    def __contains__(self, hostname: str) -> bool:
        return hostname in self.entries


class HostContact(BaseModel):
    """One distinct host an app contacted, with its label and registrable domain."""
    model_config = ConfigDict(frozen=True)

    host: str
    domain: str
    label: HostLabel


class AppContacts(BaseModel):
    model_config = ConfigDict(frozen=True)

    app_id: str
    hosts: tuple[HostContact, ...] = ()
    total_requests: int = 0
    reviewable_requests: int = 0

    @property
    def tracker_hosts(self) -> int:
        return sum(1 for h in self.hosts if h.label == HostLabel.TRACKER)

    @property
    def nontracker_hosts(self) -> int:
        return sum(1 for h in self.hosts if h.label == HostLabel.NON_TRACKER)

    @property
    def domains(self) -> set[str]:
        return {h.domain for h in self.hosts}

    @property
    def tracker_domains(self) -> set[str]:
        return {h.domain for h in self.hosts if h.label == HostLabel.TRACKER}
