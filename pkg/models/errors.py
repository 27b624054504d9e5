"""
Pipeline errors

Every failure the pipeline can raise derives from CtdrError and carries the
process exit code the CLI reports for it.
"""


class CtdrError(Exception):
    """Base class for all pipeline errors."""
    exit_code = 3
    stage = None  # set by the runner to the failing stage


class ConfigError(CtdrError):
    """Invalid configuration or command usage."""
    exit_code = 1


class DataError(CtdrError):
    """Input data or artifact content violates a contract."""
    exit_code = 2


class InvariantError(CtdrError):
    """An internal invariant (e.g. split lineage) does not hold."""
    exit_code = 3


# Registry ingest
class MalformedDocument(DataError):
    """Document is not parseable as a registry study document."""


class InvalidEnumValue(DataError):
    """A closed-set field holds a value outside its value set."""

    def __init__(self, field, value):
        self.field = field
        self.value = value
        super().__init__(f"invalid value {value!r} for {field}")


class ConstraintViolation(DataError):
    """A cross-field constraint of a study record does not hold."""


class UnknownCategory(DataError):
    """A categorical value has no encoding id."""

    def __init__(self, feature, raw):
        self.feature = feature
        self.raw = raw
        super().__init__(f"unknown category {raw!r} for feature {feature}")


class SchemaVersionMismatch(DataError):
    """Artifact header is missing or declares another schema version."""


class DatasetIOError(DataError):
    """A dataset or corpus file could not be read or written."""


class EmptyDataset(DataError):
    """An operation needs at least one trial."""


# Labeling
class EmptyTermList(DataError):
    """The dosing-term list has no concepts."""


class InvalidCounts(DataError):
    """Binomial counts outside 0 <= k <= n, n >= 1."""


class NoAtRiskPopulation(DataError):
    """A trial reports no participants at risk."""

    def __init__(self, nct_id):
        self.nct_id = nct_id
        super().__init__(f"{nct_id}: no participants at risk")


# Splitting and features
class MissingStartDate(DataError):
    """A trial lacks the start date needed for ordering."""


class InsufficientSamples(DataError):
    """A partition has too few values for a statistic."""


class MissingIdfStats(DataError):
    """Text transform requested without fitted idf statistics."""


# Models, calibration and metrics
class DegenerateLabels(DataError):
    """Training labels contain a single class."""


class DimensionMismatch(DataError):
    """Matrix and labels or model disagree in shape."""


class NonFinite(DataError):
    """Scores contain NaN or infinite values."""


class EmptyInput(DataError):
    """An operation received no values."""


class LengthMismatch(DataError):
    """Vectors that must align have different lengths."""


class SingleClass(DataError):
    """A metric needs both classes to be present."""


# Orchestration
class MissingUpstreamArtifact(DataError):
    """A stage ran before the stage producing its inputs."""


class FingerprintMismatch(InvariantError):
    """A fitted artifact was not produced from the validation split."""
