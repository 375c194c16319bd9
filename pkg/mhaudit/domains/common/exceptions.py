"""
Common exceptions for the audit domains.
Each error carries a human-readable detail; stage runners turn per-app
errors into ledger entries instead of aborting the corpus.
"""


class AuditError(Exception):
    """Base class for every domain error."""
    default_detail = "Audit error"

    def __init__(self, detail: str | None = None):
        self.detail = detail or self.default_detail
        super().__init__(self.detail)


class MalformedTaxonomyError(AuditError):
    """Raised when a taxonomy document violates its invariants."""
    default_detail = "Malformed taxonomy"


class UnknownDataTypeError(AuditError):
    """Raised when a data type id is not in the taxonomy."""
    default_detail = "Unknown data type"


class UnreadableArtifactError(AuditError):
    """Raised when an app artifact cannot be read or recognised."""
    default_detail = "Unreadable artifact"


class MalformedDexError(AuditError):
    """Raised on a bad DEX magic or truncated tables."""
    default_detail = "Malformed DEX file"


class MalformedSignatureDbError(AuditError):
    default_detail = "Malformed tracker signature database"


class InvalidHostnameError(AuditError):
    default_detail = "Invalid hostname"


class UnknownCaptureFormatError(AuditError):
    """Raised when a capture file is neither HAR nor flow-record JSONL."""
    default_detail = "Unknown capture format"


class MalformedEntryError(AuditError):
    default_detail = "Malformed capture entry"


class EmptyPersonaError(AuditError):
    default_detail = "Persona has no attributes"


class MissingPolicyRuleError(AuditError):
    default_detail = "No expectation rule for feature category"


class EmptyCorpusError(AuditError):
    default_detail = "Corpus is empty"


class IoFailureError(AuditError):
    default_detail = "Could not write output"


class InvalidPlanError(AuditError):
    """Raised when a fixture plan references unknown ids or impossible plants."""
    default_detail = "Invalid fixture plan"


class CorpusMismatchError(AuditError):
    default_detail = "Detections and ground truth come from different corpora"


class ManifestError(AuditError):
    """Raised for fatal manifest or configuration problems."""
    default_detail = "Invalid audit manifest"
