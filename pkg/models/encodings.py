"""
Categorical encodings

Closed value sets of the registry fields used as features, and their integer
ids. The id of a value is its position in the enum definition; this order is
fixed: saved matrices and models depend on it.
"""
import enum
from typing import Dict, Iterable, Tuple, Type

from models.errors import UnknownCategory


class Phase(enum.Enum):
    """Clinical development phase."""
    NA = "NA"
    EARLY_PHASE1 = "EARLY_PHASE1"
    PHASE1 = "PHASE1"
    PHASE2 = "PHASE2"
    PHASE3 = "PHASE3"
    PHASE4 = "PHASE4"


class PrimaryPurpose(enum.Enum):
    """Primary objective of the study."""
    TREATMENT = "TREATMENT"
    PREVENTION = "PREVENTION"
    DIAGNOSTIC = "DIAGNOSTIC"
    ECT = "ECT"
    SUPPORTIVE_CARE = "SUPPORTIVE_CARE"
    SCREENING = "SCREENING"
    HEALTH_SERVICES_RESEARCH = "HEALTH_SERVICES_RESEARCH"
    BASIC_SCIENCE = "BASIC_SCIENCE"
    DEVICE_FEASIBILITY = "DEVICE_FEASIBILITY"
    OTHER = "OTHER"


class Masking(enum.Enum):
    """Masking strategy used in the trial design."""
    NONE = "NONE"
    SINGLE = "SINGLE"
    DOUBLE = "DOUBLE"
    TRIPLE = "TRIPLE"
    QUADRUPLE = "QUADRUPLE"


class Sex(enum.Enum):
    """Sex eligibility of participants."""
    ALL = "ALL"
    FEMALE = "FEMALE"
    MALE = "MALE"


class ArmGroupType(enum.Enum):
    """Type of a study arm."""
    EXPERIMENTAL = "EXPERIMENTAL"
    ACTIVE_COMPARATOR = "ACTIVE_COMPARATOR"
    PLACEBO_COMPARATOR = "PLACEBO_COMPARATOR"
    SHAM_COMPARATOR = "SHAM_COMPARATOR"
    NO_INTERVENTION = "NO_INTERVENTION"
    OTHER = "OTHER"


class InterventionType(enum.Enum):
    """Category of an evaluated intervention."""
    DRUG = "DRUG"
    DEVICE = "DEVICE"
    BIOLOGICAL = "BIOLOGICAL"
    PROCEDURE = "PROCEDURE"
    RADIATION = "RADIATION"
    BEHAVIORAL = "BEHAVIORAL"
    GENETIC = "GENETIC"
    DIETARY_SUPPLEMENT = "DIETARY_SUPPLEMENT"
    COMBINATION_PRODUCT = "COMBINATION_PRODUCT"
    DIAGNOSTIC_TEST = "DIAGNOSTIC_TEST"
    OTHER = "OTHER"


# Registry fields that are validated but not encoded as features
class OverallStatus(enum.Enum):
    ACTIVE_NOT_RECRUITING = "ACTIVE_NOT_RECRUITING"
    COMPLETED = "COMPLETED"
    ENROLLING_BY_INVITATION = "ENROLLING_BY_INVITATION"
    NOT_YET_RECRUITING = "NOT_YET_RECRUITING"
    RECRUITING = "RECRUITING"
    SUSPENDED = "SUSPENDED"
    TERMINATED = "TERMINATED"
    WITHDRAWN = "WITHDRAWN"
    AVAILABLE = "AVAILABLE"
    NO_LONGER_AVAILABLE = "NO_LONGER_AVAILABLE"
    TEMPORARILY_NOT_AVAILABLE = "TEMPORARILY_NOT_AVAILABLE"
    APPROVED_FOR_MARKETING = "APPROVED_FOR_MARKETING"
    WITHHELD = "WITHHELD"
    UNKNOWN = "UNKNOWN"


class StudyType(enum.Enum):
    INTERVENTIONAL = "INTERVENTIONAL"
    OBSERVATIONAL = "OBSERVATIONAL"
    EXPANDED_ACCESS = "EXPANDED_ACCESS"


class SponsorClass(enum.Enum):
    NIH = "NIH"
    FED = "FED"
    OTHER_GOV = "OTHER_GOV"
    INDIV = "INDIV"
    INDUSTRY = "INDUSTRY"
    NETWORK = "NETWORK"
    AMBIG = "AMBIG"
    OTHER = "OTHER"
    UNKNOWN = "UNKNOWN"


# Feature name -> enum holding its value set
CATEGORICAL_FEATURES: Dict[str, Type[enum.Enum]] = {
    'phases': Phase,
    'primaryPurpose': PrimaryPurpose,
    'masking': Masking,
    'sex': Sex,
    'armGroupTypes': ArmGroupType,
    'interventionTypes': InterventionType,
}

SINGLE_LABEL_FEATURES = ('primaryPurpose', 'masking', 'sex')
MULTI_LABEL_FEATURES = ('phases', 'armGroupTypes', 'interventionTypes')

_IDS: Dict[str, Dict[str, int]] = {
    feature: {member.value: idx for idx, member in enumerate(enum_cls)}
    for feature, enum_cls in CATEGORICAL_FEATURES.items()
}


def category_values(feature: str) -> Tuple[str, ...]:
    """Return the value set of a categorical feature in id order."""
    if feature not in CATEGORICAL_FEATURES:
        raise UnknownCategory(feature, None)
    return tuple(member.value for member in CATEGORICAL_FEATURES[feature])


def encode_categorical(feature: str, raw):
    """Encode a categorical value into its integer id.

    Args:
        feature: One of the categorical feature names.
        raw: Value string (or enum member). For multi-label features an
            iterable of values is accepted and encoded element-wise.

    Returns:
        int id, or a frozenset of ids for an iterable input.

    Example:
        >>> encode_categorical('phases', 'PHASE2')
        3
    """
    if feature not in _IDS:
        raise UnknownCategory(feature, raw)
    if isinstance(raw, (list, tuple, set, frozenset)):
        return frozenset(encode_categorical(feature, value) for value in raw)
    key = raw.value if isinstance(raw, enum.Enum) else raw
    try:
        return _IDS[feature][key]
    except (KeyError, TypeError):
        raise UnknownCategory(feature, raw) from None


def decode_categorical(feature: str, category_id: int) -> str:
    """Inverse of encode_categorical for a single id."""
    values = category_values(feature)
    if not isinstance(category_id, int) or not 0 <= category_id < len(values):
        raise UnknownCategory(feature, category_id)
    return values[category_id]


def sort_by_id(feature: str, values: Iterable[str]) -> Tuple[str, ...]:
    """Deduplicate values and order them by encoding id."""
    unique = set(values)
    return tuple(sorted(unique, key=lambda value: encode_categorical(feature, value)))
