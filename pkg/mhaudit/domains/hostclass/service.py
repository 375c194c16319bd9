import hashlib
import ipaddress
import logging
from pathlib import Path
from typing import Iterable, Optional

import idna

from mhaudit.domains.common.enums import HostLabel, HostMatchMode
from mhaudit.domains.common.exceptions import InvalidHostnameError
from .psl import PublicSuffixList, public_suffix
from .schemas import AppContacts, HostContact, HostsList

logger = logging.getLogger(__name__)

LOOPBACK_NAMES = frozenset({
    "localhost",
    "localhost.localdomain",
    "local",
    "broadcasthost",
    "ip6-localhost",
    "ip6-loopback",
    "0.0.0.0",
})


def is_ip_literal(hostname: str) -> bool:
    try:
        ipaddress.ip_address(hostname.strip("[]"))
    except ValueError:
        return False
    return True


def normalize_hostname(hostname: str) -> str:
    """Lowercase, strip a trailing dot and encode IDN labels as punycode."""
    if hostname is None or not hostname.strip():
        raise InvalidHostnameError("empty hostname")
    if any(c.isspace() for c in hostname.strip()):
        raise InvalidHostnameError(f"hostname contains whitespace: {hostname!r}")
    host = hostname.strip().rstrip(".").lower()
    if is_ip_literal(host) or host.isascii():
        return host
    try:
        return idna.encode(host, uts46=True).decode("ascii")
    except idna.IDNAError as e:
        raise InvalidHostnameError(f"cannot encode {hostname!r}: {e}")


# --- Hosts list ---

def parse_hosts_list(text: bytes) -> HostsList:
    """Parse hosts-file syntax; malformed lines are counted and skipped."""
    decoded = text.decode("utf-8", errors="replace")
    entries: set[str] = set()
    malformed = 0
    for line in decoded.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) < 2 or not is_ip_literal(tokens[0]):
            malformed += 1
            continue
        for token in tokens[1:]:
            try:
                host = normalize_hostname(token)
            except InvalidHostnameError:
                malformed += 1
                continue
            if host not in LOOPBACK_NAMES:
                entries.add(host)
    if malformed:
        logger.warning("Skipped %d malformed hosts entries", malformed)
    return HostsList(
        entries=frozenset(entries),
        source_digest=hashlib.sha256(text).hexdigest(),
        malformed_lines=malformed,
    )


def load_hosts_list(file: Path) -> HostsList:
    hosts = parse_hosts_list(Path(file).read_bytes())
    logger.debug("Loaded %d tracker hosts from %s", len(hosts.entries), file)
    return hosts


def serialize_hosts_list(hosts: HostsList) -> bytes:
    return "".join(f"0.0.0.0 {host}\n" for host in sorted(hosts.entries)).encode("utf-8")


# --- Classification ---

def _parents(hostname: str) -> Iterable[str]:
    labels = hostname.split(".")
    for start in range(len(labels)):
        yield ".".join(labels[start:])


def classify_host(
    hosts: HostsList,
    hostname: str,
    mode: HostMatchMode = HostMatchMode.EXACT,
) -> HostLabel:
    host = normalize_hostname(hostname)
    if mode == HostMatchMode.EXACT or is_ip_literal(host):
        return HostLabel.TRACKER if host in hosts.entries else HostLabel.NON_TRACKER
    for candidate in _parents(host):
        if candidate in hosts.entries:
            return HostLabel.TRACKER
    return HostLabel.NON_TRACKER


def registrable_domain(hostname: str, psl: Optional[PublicSuffixList] = None) -> str:
    """Public suffix plus one label; the last two labels without a list; IP literals unchanged."""
    host = normalize_hostname(hostname)
    if is_ip_literal(host):
        return host
    labels = host.split(".")
    if psl is None:
        return ".".join(labels[-2:])
    suffix = public_suffix(psl, host)
    suffix_labels = suffix.count(".") + 1
    if len(labels) <= suffix_labels:
        return host
    return ".".join(labels[-(suffix_labels + 1):])


def summarize_contacts(
    app_id: str,
    flows: list,
    psl: Optional[PublicSuffixList] = None,
) -> AppContacts:
    """Distinct labelled hosts of every flow, zero-length requests included."""
    seen: dict[str, HostContact] = {}
    for flow in flows:
        if flow.host in seen:
            continue
        if flow.host_label is None:
            raise ValueError(f"flow {flow.flow_id} has no host label")
        seen[flow.host] = HostContact(
            host=flow.host,
            domain=registrable_domain(flow.host, psl),
            label=flow.host_label,
        )
    return AppContacts(
        app_id=app_id,
        hosts=tuple(seen[host] for host in sorted(seen)),
        total_requests=len(flows),
        reviewable_requests=sum(1 for flow in flows if flow.body_length > 0),
    )


def label_flows(flows: list, hosts: HostsList, mode: HostMatchMode = HostMatchMode.EXACT) -> list:
    """Copies of the flows with host_label assigned."""
    labels: dict[str, HostLabel] = {}
    labelled = []
    for flow in flows:
        if flow.host not in labels:
            labels[flow.host] = classify_host(hosts, flow.host, mode)
        labelled.append(flow.model_copy(update={"host_label": labels[flow.host]}))
    return labelled
