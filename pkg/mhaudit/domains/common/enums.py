from enum import Enum


class Specificity(str, Enum):
    STANDARD = "standard"
    NONSTANDARD = "nonstandard"
    MEDICAL = "medical"

    @property
    def rank(self) -> int:
        """Position in the order standard < nonstandard < medical."""
        return _SPECIFICITY_RANK[self]


_SPECIFICITY_RANK = {
    Specificity.STANDARD: 0,
    Specificity.NONSTANDARD: 1,
    Specificity.MEDICAL: 2,
}


class DataCategory(str, Enum):
    """Data categories in the column order of the scope matrix."""
    DEVICE_IDS = "device_ids"
    LOCATION = "location"
    USER_INFO = "user_info"
    BODY_MEASUREMENTS = "body_measurements"
    FITNESS_INFO = "fitness_info"
    FEMALE_HEALTH_INFO = "female_health_info"
    MEDICAL_INFO = "medical_info"

    @property
    def specificity(self) -> Specificity:
        return _CATEGORY_SPECIFICITY[self]

    @property
    def display_name(self) -> str:
        return _CATEGORY_DISPLAY[self]


_CATEGORY_SPECIFICITY = {
    DataCategory.DEVICE_IDS: Specificity.STANDARD,
    DataCategory.LOCATION: Specificity.STANDARD,
    DataCategory.USER_INFO: Specificity.STANDARD,
    DataCategory.BODY_MEASUREMENTS: Specificity.NONSTANDARD,
    DataCategory.FITNESS_INFO: Specificity.NONSTANDARD,
    DataCategory.FEMALE_HEALTH_INFO: Specificity.MEDICAL,
    DataCategory.MEDICAL_INFO: Specificity.MEDICAL,
}

_CATEGORY_DISPLAY = {
    DataCategory.DEVICE_IDS: "Device IDs",
    DataCategory.LOCATION: "Location",
    DataCategory.USER_INFO: "User Info",
    DataCategory.BODY_MEASUREMENTS: "Body measurements",
    DataCategory.FITNESS_INFO: "Fitness info",
    DataCategory.FEMALE_HEALTH_INFO: "Female health info",
    DataCategory.MEDICAL_INFO: "Medical info",
}


class LabelCategory(str, Enum):
    """Privacy-label categories; everything outside the study collapses into OTHER."""
    DEVICE_OR_OTHER_IDS = "device_or_other_ids"
    LOCATION = "location"
    PERSONAL_INFO = "personal_info"
    FITNESS_INFO = "fitness_info"
    HEALTH_INFO = "health_info"
    OTHER = "other"


STUDY_LABELS = (
    LabelCategory.DEVICE_OR_OTHER_IDS,
    LabelCategory.LOCATION,
    LabelCategory.PERSONAL_INFO,
    LabelCategory.FITNESS_INFO,
    LabelCategory.HEALTH_INFO,
)


class FeatureCategory(str, Enum):
    SCREEN_OVERLAY = "screen_overlay"
    HEALTH_EDUCATION = "health_education"
    STEP_COUNTER = "step_counter"
    WORKOUT_TRACKER = "workout_tracker"
    CARDIO_TRACKER = "cardio_tracker"
    DIET_TRACKER = "diet_tracker"
    WEARABLE = "wearable"
    MENTAL_WELLBEING = "mental_wellbeing"
    PHARMACY = "pharmacy"
    PHYSICIAN_FINDER = "physician_finder"
    FEMALE_HEALTH = "female_health"
    DIAGNOSTIC = "diagnostic"
    HEALTH_MONITOR = "health_monitor"
    TELEMEDICINE = "telemedicine"


class CrawlKind(str, Enum):
    MANUAL = "manual"
    AUTOMATED = "automated"


class HostLabel(str, Enum):
    TRACKER = "tracker"
    NON_TRACKER = "non_tracker"


class HostMatchMode(str, Enum):
    EXACT = "exact"
    SUFFIX = "suffix"


class VariantKind(str, Enum):
    PLAIN = "plain"
    PERCENT_ENCODED = "percent_encoded"
    BASE64 = "base64"
    MD5_HEX = "md5_hex"
    SHA1_HEX = "sha1_hex"
    SHA256_HEX = "sha256_hex"
    KEYED_NUMERIC = "keyed_numeric"


class ViewKind(str, Enum):
    RAW_TEXT = "raw_text"
    URL_DECODED = "url_decoded"
    JSON_STRINGS = "json_strings"
    FORM_FIELDS = "form_fields"
    MULTIPART_PARTS = "multipart_parts"


class HitLocation(str, Enum):
    PATH = "path"
    QUERY = "query"
    HEADER = "header"
    BODY = "body"


class Verdict(str, Enum):
    CORRECT_COLLECTION = "correct_collection"
    CORRECT_SHARING = "correct_sharing"
    UNDECLARED_COLLECTION = "undeclared_collection"
    UNDECLARED_SHARING = "undeclared_sharing"
    UNOBSERVED_DECLARATION = "unobserved_declaration"
