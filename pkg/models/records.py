"""
Trial records

Validated, immutable views of a registry study and of the rows derived from it:
the feature row used for modeling, the auxiliary pass-through columns and the
trial-level dosing-error aggregates. All models round-trip through JSON.
"""
from dataclasses import dataclass, field
from datetime import date
from typing import Dict, Iterator, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic.alias_generators import to_camel

from models.encodings import (ArmGroupType, InterventionType, Masking, OverallStatus, Phase,
                              PrimaryPurpose, Sex, SponsorClass, StudyType)
from models.errors import ConstraintViolation

NCT_PATTERN = r'^NCT\d{8}$'


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')


class DesignInfo(_Frozen):
    primary_purpose: Optional[PrimaryPurpose] = None
    masking: Optional[Masking] = None
    allocation: Optional[str] = None
    intervention_model: Optional[str] = None
    phases: Optional[Tuple[Phase, ...]] = None
    oversight_has_dmc: Optional[bool] = None


class ArmGroup(_Frozen):
    label: str
    group_type: Optional[ArmGroupType] = None
    description: Optional[str] = None


class InterventionInfo(_Frozen):
    intervention_type: InterventionType
    name: str
    description: Optional[str] = None


class EligibilityInfo(_Frozen):
    sex: Optional[Sex] = None
    healthy_volunteers: Optional[bool] = None


class EventGroup(_Frozen):
    """Results-section group for which adverse events are reported."""
    group_id: str
    title: Optional[str] = None
    serious_num_at_risk: Optional[int] = Field(None, ge=0)
    other_num_at_risk: Optional[int] = Field(None, ge=0)


class AdverseEventEntry(_Frozen):
    """One adverse-event term reported for one event group."""
    arm_group_id: str
    event_term: str
    num_affected: int = Field(ge=0)
    num_at_risk: int = Field(ge=0)
    serious: bool = False

    @model_validator(mode='after')
    def _affected_within_at_risk(self):
        if self.num_at_risk > 0 and self.num_affected > self.num_at_risk:
            raise ConstraintViolation(
                f'{self.event_term!r} in {self.arm_group_id}: '
                f'num_affected {self.num_affected} > num_at_risk {self.num_at_risk}')
        return self


class StudyRecord(_Frozen):
    """Validated registry study."""
    nct_id: str = Field(pattern=NCT_PATTERN)
    brief_title: Optional[str] = None
    overall_status: OverallStatus
    study_type: StudyType
    has_results: bool = False
    start_date: Optional[date] = None
    completion_date: Optional[date] = None
    primary_completion_date: Optional[date] = None
    first_submit_date: Optional[date] = None
    design: DesignInfo = Field(default_factory=DesignInfo)
    arms: Tuple[ArmGroup, ...] = ()
    interventions: Tuple[InterventionInfo, ...] = ()
    eligibility: EligibilityInfo = Field(default_factory=EligibilityInfo)
    enrollment_count: Optional[int] = Field(None, ge=0)
    conditions: Tuple[str, ...] = ()
    keywords: Tuple[str, ...] = ()
    brief_summary: Optional[str] = None
    detailed_description: Optional[str] = None
    event_groups: Tuple[EventGroup, ...] = ()
    adverse_events: Tuple[AdverseEventEntry, ...] = ()
    locations_count: int = Field(0, ge=0)
    location_text: Optional[str] = None
    sponsor_name: Optional[str] = None
    sponsor_class: Optional[SponsorClass] = None
    has_protocol: bool = False
    has_sap: bool = False
    has_icf: bool = False
    protocol_pdf_links: Tuple[str, ...] = ()

    @model_validator(mode='after')
    def _dates_ordered(self):
        if self.start_date and self.completion_date and self.completion_date < self.start_date:
            raise ConstraintViolation(
                f'{self.nct_id}: completion date {self.completion_date} precedes '
                f'start date {self.start_date}')
        return self


class FeatureRow(_Frozen):
    """Pre-initiation feature vector of one trial. None is the missing marker."""
    model_config = ConfigDict(frozen=True, extra='forbid', alias_generator=to_camel,
                              populate_by_name=True)

    nct_id: str
    # categorical
    primary_purpose: Optional[str] = None
    masking: Optional[str] = None
    sex: Optional[str] = None
    phases: Optional[Tuple[str, ...]] = None
    arm_group_types: Optional[Tuple[str, ...]] = None
    intervention_types: Optional[Tuple[str, ...]] = None
    # binary
    healthy_volunteers: Optional[bool] = None
    oversight_has_dmc: Optional[bool] = None
    # numeric
    enrollment_count: Optional[int] = Field(None, ge=0)
    num_arms: Optional[int] = Field(None, ge=0)
    num_interventions: Optional[int] = Field(None, ge=0)
    num_locations: Optional[int] = Field(None, ge=0)
    # text
    allocation: Optional[str] = None
    intervention_model: Optional[str] = None
    brief_summary: Optional[str] = None
    detailed_description: Optional[str] = None
    conditions: Optional[str] = None
    conditions_keywords: Optional[str] = None
    arm_descriptions: Optional[str] = None
    intervention_names: Optional[str] = None
    intervention_descriptions: Optional[str] = None
    location_details: Optional[str] = None

    @model_validator(mode='after')
    def _unique_labels(self):
        for name in ('phases', 'arm_group_types', 'intervention_types'):
            values = getattr(self, name)
            if values is not None and len(set(values)) != len(values):
                raise ConstraintViolation(f'{self.nct_id}: duplicate values in {name}')
        return self


TEXT_FIELDS = (
    'allocation', 'intervention_model', 'brief_summary', 'detailed_description', 'conditions',
    'conditions_keywords', 'arm_descriptions', 'intervention_names', 'intervention_descriptions',
    'location_details',
)
NUMERIC_FIELDS = ('enrollment_count', 'num_arms', 'num_interventions', 'num_locations')
BINARY_FIELDS = ('healthy_volunteers', 'oversight_has_dmc')


class AuxiliaryRow(_Frozen):
    """Pass-through columns kept for reuse of the dataset; never model inputs."""
    model_config = ConfigDict(frozen=True, extra='forbid', populate_by_name=True)

    nct_id: str = Field(alias='nctId')
    overall_status: str = Field(alias='overallStatus')
    lead_sponsor_class: Optional[str] = Field(None, alias='leadSponsorClass')
    lead_sponsor_name: Optional[str] = Field(None, alias='leadSponsorName')
    has_protocol: bool = Field(False, alias='hasProtocol')
    has_sap: bool = Field(False, alias='hasSap')
    has_icf: bool = Field(False, alias='hasIcf')
    start_date: Optional[date] = Field(None, alias='startDate')
    completion_date: Optional[date] = Field(None, alias='completionDate')
    protocol_pdf_links: Tuple[str, ...] = Field((), alias='protocolPdfLinks')
    # label-derived, filled by the labeler
    concept_counts: Dict[str, int] = Field(default_factory=dict, alias='counts')
    wilson_lower_bound: Optional[float] = None
    ct_level_ade_population: Optional[int] = Field(None, ge=0)
    sum_dosing_errors: Optional[int] = Field(None, ge=0)
    dosing_error_rate: Optional[float] = None

    @model_validator(mode='after')
    def _rate_consistent(self):
        population = self.ct_level_ade_population
        if population and self.sum_dosing_errors is not None and self.dosing_error_rate is not None:
            if abs(self.dosing_error_rate - self.sum_dosing_errors / population) > 1e-12:
                raise ConstraintViolation(f'{self.nct_id}: dosing_error_rate inconsistent with counts')
        return self

    def count_columns(self) -> Dict[str, int]:
        """The count_X family, keyed by column name."""
        return {f'count_{concept_id}': count for concept_id, count in sorted(self.concept_counts.items())}


class TrialAggregates(_Frozen):
    """Trial-level dosing-error counts, rate, Wilson lower bound and label."""
    nct_id: str
    at_risk_n: int = Field(ge=0)
    error_k: int = Field(ge=0)
    rate: float = Field(ge=0, le=1)
    wilson_lower: float = Field(ge=0, le=1)
    label: bool

    @model_validator(mode='after')
    def _consistent(self):
        if self.at_risk_n > 0 and self.error_k > self.at_risk_n:
            raise ConstraintViolation(f'{self.nct_id}: error_k exceeds at_risk_n')
        if self.wilson_lower > self.rate + 1e-15:
            raise ConstraintViolation(f'{self.nct_id}: Wilson lower bound above the observed rate')
        return self


class DatasetEntry(_Frozen):
    features: FeatureRow
    auxiliary: AuxiliaryRow
    record: StudyRecord
    aggregates: Optional[TrialAggregates] = None

    @property
    def nct_id(self) -> str:
        return self.record.nct_id

    @property
    def label(self) -> Optional[bool]:
        return None if self.aggregates is None else self.aggregates.label


@dataclass(frozen=True)
class Rejection:
    source: str
    reason: str


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of trials ordered by nct_id."""
    entries: Tuple[DatasetEntry, ...] = ()
    rejections: Tuple[Rejection, ...] = ()
    meta: Dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[DatasetEntry]:
        return iter(self.entries)

    @property
    def nct_ids(self) -> List[str]:
        return [entry.nct_id for entry in self.entries]

    def by_id(self) -> Dict[str, DatasetEntry]:
        return {entry.nct_id: entry for entry in self.entries}

    def labeled(self) -> 'Dataset':
        """Entries carrying a label, i.e. eligible for supervised splits."""
        kept = tuple(entry for entry in self.entries if entry.aggregates is not None)
        return Dataset(entries=kept, rejections=self.rejections, meta=self.meta)
