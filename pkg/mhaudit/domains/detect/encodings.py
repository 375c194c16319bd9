"""Canonical encodings of persona values.

The detector searches for these forms; the fixture generator plants them.
"""

import base64
import hashlib
from urllib.parse import quote

from mhaudit.domains.common.enums import VariantKind

HASH_KINDS = {
    VariantKind.MD5_HEX: hashlib.md5,
    VariantKind.SHA1_HEX: hashlib.sha1,
    VariantKind.SHA256_HEX: hashlib.sha256,
}

URL_SAFE_CHARS = frozenset(
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-._~@:"
)


def percent_encode(value: str) -> str:
    return quote(value, safe="")


def base64_forms(value: str) -> list[str]:
    """Standard and URL-safe alphabets, padded and unpadded, without duplicates."""
    raw = value.encode("utf-8")
    forms = []
    for encoded in (base64.b64encode(raw), base64.urlsafe_b64encode(raw)):
        text = encoded.decode("ascii")
        for form in (text, text.rstrip("=")):
            if form not in forms:
                forms.append(form)
    return forms


def hex_digest(kind: VariantKind, value: str) -> str:
    """Lowercase hex digest of the lowercased value."""
    return HASH_KINDS[kind](value.lower().encode("utf-8")).hexdigest()


def hash_forms(kind: VariantKind, value: str) -> list[str]:
    digest = hex_digest(kind, value)
    return [digest, digest.upper()]


def is_url_safe(value: str) -> bool:
    return all(c in URL_SAFE_CHARS for c in value)


def encode_value(kind: VariantKind, value: str, url_context: bool = False) -> str:
    """The single form the fixture generator plants for a (kind, value) pair."""
    if kind == VariantKind.PLAIN:
        return value
    if kind == VariantKind.PERCENT_ENCODED:
        return percent_encode(value)
    if kind == VariantKind.BASE64:
        raw = value.encode("utf-8")
        if url_context:
            return base64.urlsafe_b64encode(raw).decode("ascii").rstrip("=")
        return base64.b64encode(raw).decode("ascii")
    if kind in HASH_KINDS:
        return hex_digest(kind, value)
    raise ValueError(f"{kind.value} values are not encoded as a token")
